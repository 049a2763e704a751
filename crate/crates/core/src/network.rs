//! The full model: input encoder, one or more cell-complex layers, and a
//! linear classification head.
//!
//! Each layer infers a skeleton from auxiliary embeddings of its (detached)
//! input, runs graph convolution on it, lifts node features to edges,
//! samples polygons, runs cell convolution on the edges and brings the
//! result back to the nodes. The node output concatenates the graph
//! convolution features with the downlifted edge features.

use std::path::Path;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex::{enumerate_induced_cycles, lift, CellComplex, Skeleton, DEFAULT_K_MAX};
use crate::entmax::{AlphaParam, DEFAULT_EPS, RAW_LIMIT};
use crate::error::{Error, Result};
use crate::nn::{dropout, Bound, Linear, ParamId, ParamStore};
use crate::polygon::{edge_mp, incidence_matrix, sample_polygons, CellConv, SampledPolygons, Uplift};
use crate::skeleton::{node_mp, sample_skeleton, similarity_matrix, AuxEncoder, AuxMode, GraphConv, SampledSkeleton};
use crate::tensor::{Alpha, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub k_max: usize,
    /// Graph convolution layers per cell-complex layer.
    pub node_layers: usize,
    /// Cell convolution layers per cell-complex layer.
    pub edge_layers: usize,
    /// Stacked cell-complex layers.
    pub dcm_layers: usize,
    pub dropout: f64,
    /// Condition the auxiliary encoder on the input graph.
    pub graph_conditioned: bool,
    /// Keep every candidate polygon with uniform probability.
    pub all_polygons: bool,
    pub entmax_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            k_max: DEFAULT_K_MAX,
            node_layers: 1,
            edge_layers: 1,
            dcm_layers: 1,
            dropout: 0.5,
            graph_conditioned: false,
            all_polygons: false,
            entmax_eps: DEFAULT_EPS,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden == 0 {
            return bad("hidden width must be positive");
        }
        if self.k_max < 3 {
            return bad("k_max must be at least 3");
        }
        if self.node_layers == 0 || self.edge_layers == 0 || self.dcm_layers == 0 {
            return bad("layer counts must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.entmax_eps.is_nan() || self.entmax_eps <= 0.0 {
            return bad("entmax_eps must be positive");
        }
        Ok(())
    }
}

/// Edge-to-node map `β(Σ_{e ∋ v} φ(x_e))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Downlift {
    pub phi: Linear,
    pub beta: Linear,
}

impl Downlift {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d: usize) -> Self {
        Self {
            phi: Linear::new(store, rng, &format!("{name}.phi"), d, d),
            beta: Linear::new(store, rng, &format!("{name}.beta"), d, d),
        }
    }

    /// Returns `[x_nodes_int | x_down]`.
    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        x_edges: &Var<'t>,
        x_nodes_int: &Var<'t>,
        complex: &CellComplex,
    ) -> Result<Var<'t>> {
        let s = complex.skeleton();
        if x_edges.rows() != s.n_edges() || x_nodes_int.rows() != s.n_vertices() {
            return Err(Error::Mismatch {
                what: "downlift rows",
                expected: s.n_edges(),
                got: x_edges.rows(),
            });
        }
        let coboundary = Rc::new(incidence_matrix(s).transpose());
        let msg = self.phi.forward(p, x_edges)?;
        let down = self.beta.forward(p, &msg.spmm(coboundary)?)?;
        Ok(x_nodes_int.concat_cols(&down)?)
    }
}

/// Parameters of one cell-complex layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DcmLayer {
    pub aux: AuxEncoder,
    pub aux_edges: Uplift,
    pub alpha_edge: ParamId,
    pub alpha_polygon: ParamId,
    pub node_mp: Vec<GraphConv>,
    pub uplift: Uplift,
    pub edge_mp: Vec<CellConv>,
    pub downlift: Downlift,
}

/// Values sampled by one layer during a forward pass.
pub struct LayerSample<'t> {
    /// `N×N` node-wise edge distributions.
    pub edge_probs: Var<'t>,
    /// `1×P̃` polygon distribution; `None` when there are no candidates.
    pub polygon_probs: Option<Var<'t>>,
    pub skeleton: SampledSkeleton,
    pub polygons: SampledPolygons,
    pub complex: CellComplex,
    pub alpha_edge: f64,
    pub alpha_polygon: f64,
}

pub struct ForwardOutput<'t> {
    pub logits: Var<'t>,
    pub layers: Vec<LayerSample<'t>>,
}

impl ForwardOutput<'_> {
    /// The last layer's sample, which the metrics report.
    pub fn last(&self) -> &LayerSample<'_> {
        self.layers.last().expect("at least one layer")
    }
}

/// Dropout is applied only when a generator is supplied.
pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcmModel {
    pub config: ModelConfig,
    pub n_features: usize,
    pub n_classes: usize,
    pub params: ParamStore,
    pub encoder: Linear,
    pub layers: Vec<DcmLayer>,
    pub head: Linear,
}

impl DcmModel {
    pub fn new(config: ModelConfig, n_features: usize, n_classes: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_features == 0 || n_classes == 0 {
            return Err(Error::Config("model needs features and classes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let h = config.hidden;
        let encoder = Linear::new(&mut store, &mut rng, "encoder", n_features, h);
        let mode = if config.graph_conditioned {
            AuxMode::Graph
        } else {
            AuxMode::Plain
        };
        let mut layers = Vec::with_capacity(config.dcm_layers);
        let mut d_in = h;
        for l in 0..config.dcm_layers {
            let name = |s: &str| format!("dcm{l}.{s}");
            let aux = AuxEncoder::new(&mut store, &mut rng, &name("aux.node"), d_in, h, mode);
            let aux_edges = Uplift::new(&mut store, &mut rng, &name("aux.edge"), h, h);
            let alpha_edge = store.add(name("aux.alpha_edge"), Tensor::scalar(AlphaParam::default().raw));
            let alpha_polygon = store.add(name("aux.alpha_polygon"), Tensor::scalar(AlphaParam::default().raw));
            let node_mp = (0..config.node_layers)
                .map(|k| {
                    GraphConv::new(
                        &mut store,
                        &mut rng,
                        &name(&format!("node_mp.{k}")),
                        if k == 0 { d_in } else { h },
                        h,
                    )
                })
                .collect();
            let uplift = Uplift::new(&mut store, &mut rng, &name("uplift"), h, h);
            let edge_mp = (0..config.edge_layers)
                .map(|k| CellConv::new(&mut store, &mut rng, &name(&format!("edge_mp.{k}")), h, h))
                .collect();
            let downlift = Downlift::new(&mut store, &mut rng, &name("downlift"), h);
            layers.push(DcmLayer {
                aux,
                aux_edges,
                alpha_edge,
                alpha_polygon,
                node_mp,
                uplift,
                edge_mp,
                downlift,
            });
            d_in = 2 * h;
        }
        let head = Linear::new(&mut store, &mut rng, "head", d_in, n_classes);
        Ok(Self {
            config,
            n_features,
            n_classes,
            params: store,
            encoder,
            layers,
            head,
        })
    }

    /// True for parameters of the inference branches (auxiliary encoders and α).
    pub fn is_inference_param(&self, id: ParamId) -> bool {
        self.params.name(id).contains(".aux.")
    }

    /// Current α values `(edge, polygon)` per layer.
    pub fn alphas(&self) -> Vec<(f64, f64)> {
        self.layers
            .iter()
            .map(|l| {
                let a = |id| {
                    AlphaParam {
                        raw: self.params.get(id).data()[0],
                    }
                    .value()
                };
                (a(l.alpha_edge), a(l.alpha_polygon))
            })
            .collect()
    }

    /// Keeps the raw α parameters inside the range where `1 + sigmoid` stays above 1.
    pub fn clamp_alphas(&mut self) {
        for l in &self.layers {
            for id in [l.alpha_edge, l.alpha_polygon] {
                let v = &mut self.params.get_mut(id).data_mut()[0];
                *v = v.clamp(-RAW_LIMIT, RAW_LIMIT);
            }
        }
    }

    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        x: &Var<'t>,
        g_in: Option<&Skeleton>,
        mut mode: Mode<'_>,
    ) -> Result<ForwardOutput<'t>> {
        if x.cols() != self.n_features {
            return Err(Error::Mismatch {
                what: "feature columns",
                expected: self.n_features,
                got: x.cols(),
            });
        }
        let rate = self.config.dropout;
        let mut drop = |v: Var<'t>| -> Result<Var<'t>> {
            match &mut mode {
                Mode::Train(rng) => Ok(dropout(&v, rate, rng)?),
                Mode::Eval => Ok(v),
            }
        };
        let eps = self.config.entmax_eps;
        let mut h = drop(self.encoder.forward(p, x)?.relu()?)?;
        let mut samples = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let aux = layer.aux.encode(p, &h.detach()?, g_in)?;
            let alpha_e = p.var(layer.alpha_edge).sigmoid()?.add_scalar(1.0)?;
            let alpha_p = p.var(layer.alpha_polygon).sigmoid()?.add_scalar(1.0)?;
            let (edge_probs, sampled) = sample_skeleton(&similarity_matrix(&aux)?, Alpha::Learned(alpha_e), eps)?;
            let skel = sampled.skeleton.clone();

            let mut x_int = h;
            for v in node_mp(p, &layer.node_mp, &h, &skel)? {
                x_int = drop(v)?;
            }

            let incidence = Rc::new(incidence_matrix(&skel));
            let x_edges = layer.uplift.forward_with(p, &x_int, &incidence)?;
            let aux_edges = layer.aux_edges.forward_with(p, &aux, &incidence)?;
            let candidates = enumerate_induced_cycles(&skel, self.config.k_max)?;
            let (polygon_probs, polygons) = sample_polygons(
                &aux_edges,
                &skel,
                candidates,
                Alpha::Learned(alpha_p),
                self.config.all_polygons,
                eps,
            )?;
            let complex = lift(&skel, &polygons.candidates, &polygons.selected)?;

            let mut x_out = x_edges;
            for v in edge_mp(p, &layer.edge_mp, &x_edges, &complex)? {
                x_out = drop(v)?;
            }
            h = layer.downlift.forward(p, &x_out, &x_int, &complex)?;
            samples.push(LayerSample {
                edge_probs,
                polygon_probs,
                skeleton: sampled,
                polygons,
                complex,
                alpha_edge: alpha_e.value().data()[0],
                alpha_polygon: alpha_p.value().data()[0],
            });
        }
        let logits = self.head.forward(p, &h)?;
        Ok(ForwardOutput {
            logits,
            layers: samples,
        })
    }

    /// Eval-mode forward on plain values.
    pub fn predict(&self, x: &Tensor, g_in: Option<&Skeleton>) -> Result<Prediction> {
        let tape = Tape::new();
        let p = self.params.bind(&tape);
        let out = self.forward(&p, &tape.constant(x.clone()), g_in, Mode::Eval)?;
        let last = out.last();
        Ok(Prediction {
            logits: (*out.logits.value()).clone(),
            skeleton: last.skeleton.clone(),
            polygons: last.polygons.clone(),
            complex: last.complex.clone(),
        })
    }

    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut bytes = Vec::with_capacity(self.params.n_scalars() * 8);
        let mut tensors = Vec::with_capacity(self.params.len());
        for id in self.params.ids() {
            let t = self.params.get(id);
            tensors.push(TensorEntry {
                name: self.params.name(id).to_string(),
                rows: t.rows(),
                cols: t.cols(),
                offset: bytes.len() / 8,
            });
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            dtype: "f64-le".into(),
            n_features: self.n_features,
            n_classes: self.n_classes,
            config: self.config.clone(),
            tensors,
        };
        std::fs::write(dir.join("params.bin"), bytes)?;
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )
    }

    pub fn load(dir: &Path) -> std::result::Result<Self, LoadError> {
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        if manifest.dtype != "f64-le" {
            return Err(LoadError::Format(format!("unsupported dtype {}", manifest.dtype)));
        }
        let bytes = std::fs::read(dir.join("params.bin"))?;
        let mut model = DcmModel::new(manifest.config, manifest.n_features, manifest.n_classes, 0)
            .map_err(|e| LoadError::Format(e.to_string()))?;
        if manifest.tensors.len() != model.params.len() || bytes.len() != model.params.n_scalars() * 8 {
            return Err(LoadError::Format(
                "parameter count does not match the configuration".into(),
            ));
        }
        for entry in &manifest.tensors {
            let id = model
                .params
                .find(&entry.name)
                .ok_or_else(|| LoadError::Format(format!("unknown parameter {}", entry.name)))?;
            let len = entry.rows * entry.cols;
            let end = (entry.offset + len) * 8;
            if model.params.get(id).shape() != (entry.rows, entry.cols) || end > bytes.len() {
                return Err(LoadError::Format(format!("bad shape or offset for {}", entry.name)));
            }
            let data = bytes[entry.offset * 8..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            *model.params.get_mut(id) = Tensor::new(entry.rows, entry.cols, data)
                .map_err(|e| LoadError::Format(format!("{}: {e}", entry.name)))?;
        }
        Ok(model)
    }
}

/// Eval-mode output on plain values.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: Tensor,
    pub skeleton: SampledSkeleton,
    pub polygons: SampledPolygons,
    pub complex: CellComplex,
}

impl Prediction {
    pub fn classes(&self) -> Vec<usize> {
        self.logits.argmax_rows()
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    /// Offset in `f64` elements into `params.bin`.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    dtype: String,
    n_features: usize,
    n_classes: usize,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("invalid parameter file: {0}")]
    Format(String),
}
