//! Central finite-difference gradient checks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    /// Check at most this many coordinates per input; `None` checks all.
    pub max_coords_per_input: Option<usize>,
    /// Picks the sampled coordinates.
    pub seed: u64,
    /// Inputs left out of the comparison (still fed to `f`).
    pub skip_inputs: Vec<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-4,
            max_coords_per_input: None,
            seed: 0,
            skip_inputs: Vec::new(),
        }
    }
}

/// Worst coordinate found by a check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mismatch {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    /// Coordinates skipped because a perturbation changed the discrete structure.
    pub skipped: usize,
    pub worst: Option<Mismatch>,
}

impl GradCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.worst.map_or(0.0, |w| w.rel_error)
    }
}

pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the tape gradient of a scalar function with central differences.
///
/// `f` receives one leaf per input and returns the scalar loss together with
/// a signature of any discrete structure the computation depends on (a
/// sampled support, a selected set). Coordinates where either perturbation
/// changes the signature sit on a piece boundary and are skipped.
pub fn check_gradients<S, F>(inputs: &[Tensor], opts: GradCheckOptions, f: F) -> GradCheck
where
    S: PartialEq,
    F: for<'t> Fn(&[Var<'t>]) -> (Var<'t>, S),
{
    let eval = |values: &[Tensor]| -> (f64, S) {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let (loss, sig) = f(&vars);
        (loss.value().data()[0], sig)
    };

    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let (loss, base_sig) = f(&vars);
    let grads = tape.backward(loss).expect("scalar loss on the tape");
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|v| grads.get(v).expect("every leaf has a gradient").clone())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheck {
        checked: 0,
        skipped: 0,
        worst: None,
    };
    let mut values = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        if opts.skip_inputs.contains(&k) {
            continue;
        }
        let len = input.data().len();
        let coords: Vec<usize> = match opts.max_coords_per_input {
            Some(m) if m < len => {
                let mut c = sample(&mut rng, len, m).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..len).collect(),
        };
        for j in coords {
            let x0 = input.data()[j];
            values[k].data_mut()[j] = x0 + opts.step;
            let (up, sig_up) = eval(&values);
            values[k].data_mut()[j] = x0 - opts.step;
            let (down, sig_down) = eval(&values);
            values[k].data_mut()[j] = x0;
            if sig_up != base_sig || sig_down != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * opts.step);
            let a = analytic[k].data()[j];
            let rel = rel_error(a, numeric, opts.floor);
            report.checked += 1;
            if report.worst.is_none_or(|w| rel > w.rel_error) {
                report.worst = Some(Mismatch {
                    input: k,
                    index: j,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    report
}
