//! Encode-process-decode graph network.
//!
//! * encoder: node, edge and global MLPs lift normalized features to latents
//! * processor: `rounds` interaction-network blocks, each updating edges from
//!   `[e, v_sender, v_receiver, u]`, then nodes from `[v, Σ incoming e', u]`,
//!   then the global latent from `[u, mean v', mean e']`, all residual
//! * decoder: per-node MLP to `3 * horizon` normalized accelerations
//!
//! `forward` relabels nodes into a canonical order (sorted by position) before
//! running, so every floating-point reduction happens in an order that does not
//! depend on the caller's node numbering. This makes the model exactly
//! permutation-equivariant.

use serde::{Deserialize, Serialize};

use super::mlp::{Input, Mlp, MlpTrace};
use super::params::{ParamBuilder, ParamEntry};
use super::ModelError;
use crate::graphbuild::{GraphConfig, GraphSample, EDGE_FEATURE_WIDTH, GLOBAL_FEATURE_WIDTH};
use crate::tensor::Tensor2;

/// Minimum standard deviation used when normalizing.
pub const STD_EPS: f64 = 1e-8;

/// `accel[slot][node]`: acceleration at step `k + slot + 1` (mm/step²).
pub type Accelerations = Vec<Vec<[f64; 3]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub graph: GraphConfig,
    /// Node and edge latent width `D`.
    pub latent: usize,
    /// Width of every hidden layer.
    pub hidden: usize,
    pub hidden_layers: usize,
    /// Global latent width.
    pub global_latent: usize,
    /// Message-passing rounds `M`.
    pub rounds: usize,
    /// Standardize node input features with the fitted statistics.
    pub normalize_node_features: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            graph: GraphConfig::default(),
            latent: 128,
            hidden: 128,
            hidden_layers: 2,
            global_latent: 16,
            rounds: 10,
            normalize_node_features: true,
        }
    }
}

impl ModelConfig {
    pub fn node_feature_width(&self) -> usize {
        self.graph.node_feature_width()
    }

    pub fn output_width(&self) -> usize {
        3 * self.graph.horizon
    }

    fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(std::iter::repeat_n(self.hidden, self.hidden_layers));
        d.push(output);
        d
    }
}

/// Per-feature mean and std for inputs and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub node_mean: Vec<f64>,
    pub node_std: Vec<f64>,
    pub edge_mean: Vec<f64>,
    pub edge_std: Vec<f64>,
    /// Shared by every horizon slot.
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

impl NormStats {
    /// Zero mean, unit std: normalization is a no-op.
    pub fn identity(node_width: usize) -> Self {
        NormStats {
            node_mean: vec![0.0; node_width],
            node_std: vec![1.0; node_width],
            edge_mean: vec![0.0; EDGE_FEATURE_WIDTH],
            edge_std: vec![1.0; EDGE_FEATURE_WIDTH],
            target_mean: vec![0.0; 3],
            target_std: vec![1.0; 3],
        }
    }

    /// Raises every std entry to at least [`STD_EPS`].
    pub fn clamp(&mut self) {
        for s in self
            .node_std
            .iter_mut()
            .chain(self.edge_std.iter_mut())
            .chain(self.target_std.iter_mut())
        {
            if !(*s >= STD_EPS) {
                *s = STD_EPS;
            }
        }
    }

    /// Physical acceleration to normalized target space.
    pub fn normalize_target(&self, a: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|d| (a[d] - self.target_mean[d]) / self.target_std[d])
    }

    pub fn denormalize_target(&self, a: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|d| a[d] * self.target_std[d] + self.target_mean[d])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessorBlock {
    pub edge: Mlp,
    pub node: Mlp,
    pub global: Mlp,
}

/// Where every MLP lives in the flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLayout {
    pub node_encoder: Mlp,
    pub edge_encoder: Mlp,
    pub global_encoder: Mlp,
    pub processor: Vec<ProcessorBlock>,
    pub decoder: Mlp,
    pub entries: Vec<ParamEntry>,
    builder: ParamBuilder,
}

impl NetworkLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut b = ParamBuilder::default();
        let (d, dg) = (cfg.latent, cfg.global_latent);
        let node_encoder = Mlp::allocate(&mut b, "encoder.node", &cfg.dims(cfg.node_feature_width(), d), true);
        let edge_encoder = Mlp::allocate(&mut b, "encoder.edge", &cfg.dims(EDGE_FEATURE_WIDTH, d), true);
        let global_encoder = Mlp::allocate(&mut b, "encoder.global", &cfg.dims(GLOBAL_FEATURE_WIDTH, dg), true);
        let processor = (0..cfg.rounds)
            .map(|r| ProcessorBlock {
                edge: Mlp::allocate(&mut b, &format!("processor.{r}.edge"), &cfg.dims(3 * d + dg, d), true),
                node: Mlp::allocate(&mut b, &format!("processor.{r}.node"), &cfg.dims(2 * d + dg, d), true),
                global: Mlp::allocate(
                    &mut b,
                    &format!("processor.{r}.global"),
                    &cfg.dims(dg + 2 * d, dg),
                    true,
                ),
            })
            .collect();
        let decoder = Mlp::allocate(&mut b, "decoder", &cfg.dims(d, cfg.output_width()), false);
        NetworkLayout {
            node_encoder,
            edge_encoder,
            global_encoder,
            processor,
            decoder,
            entries: b.entries().to_vec(),
            builder: b,
        }
    }

    pub fn param_count(&self) -> usize {
        self.builder.len()
    }
}

/// All learned weights plus normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub norm: NormStats,
    pub layout: NetworkLayout,
    pub values: Vec<f64>,
}

impl ModelParams {
    /// Seeded uniform initialization.
    pub fn init(config: ModelConfig, norm: NormStats, seed: u64) -> Self {
        let layout = NetworkLayout::new(&config);
        let values = layout.builder.random_values(seed);
        ModelParams {
            config,
            norm,
            layout,
            values,
        }
    }

    /// Every weight and bias zero; layer-norm gains one.
    pub fn zeros(config: ModelConfig, norm: NormStats) -> Self {
        let layout = NetworkLayout::new(&config);
        let values = layout.builder.initial_values();
        ModelParams {
            config,
            norm,
            layout,
            values,
        }
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }

    /// `(entry, offset)` for every parameter tensor.
    pub fn named_offsets(&self) -> Vec<(&ParamEntry, usize)> {
        let mut offset = 0;
        self.layout
            .entries
            .iter()
            .map(|e| {
                let here = offset;
                offset += e.len();
                (e, here)
            })
            .collect()
    }

    /// Sets every bias to a seeded uniform value in `±scale`.
    pub fn randomize_biases(&mut self, scale: f64, seed: u64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let spans: Vec<(usize, usize)> = self
            .named_offsets()
            .into_iter()
            .filter(|(e, _)| e.name.ends_with(".bias"))
            .map(|(e, o)| (o, e.len()))
            .collect();
        for (o, len) in spans {
            for v in &mut self.values[o..o + len] {
                *v = rng.random_range(-scale..=scale);
            }
        }
    }

    /// Zeroes the weights of every processor MLP (their outputs become the bias,
    /// layer-normed). Used to check the residual path.
    pub fn zero_processor(&mut self) {
        let names: Vec<(usize, usize)> = self
            .named_offsets()
            .into_iter()
            .filter(|(e, _)| e.name.starts_with("processor."))
            .map(|(e, o)| (o, e.len()))
            .collect();
        for (o, len) in names {
            self.values[o..o + len].fill(0.0);
        }
    }
}

/// Latent node, edge and global features.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGraph {
    pub nodes: Tensor2,
    pub edges: Tensor2,
    pub global: Vec<f64>,
}

/// Edge endpoints plus, per receiver, its incoming edges in edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub senders: Vec<usize>,
    pub receivers: Vec<usize>,
    incoming_offsets: Vec<usize>,
    incoming: Vec<usize>,
}

impl Topology {
    pub fn new(num_nodes: usize, senders: &[usize], receivers: &[usize]) -> Self {
        let mut counts = vec![0usize; num_nodes + 1];
        for &r in receivers {
            counts[r + 1] += 1;
        }
        for i in 0..num_nodes {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut incoming = vec![0usize; receivers.len()];
        for (e, &r) in receivers.iter().enumerate() {
            incoming[fill[r]] = e;
            fill[r] += 1;
        }
        Topology {
            senders: senders.to_vec(),
            receivers: receivers.to_vec(),
            incoming_offsets: counts,
            incoming,
        }
    }

    pub fn of(sample: &GraphSample) -> Self {
        Topology::new(sample.num_nodes(), &sample.senders, &sample.receivers)
    }

    pub fn num_nodes(&self) -> usize {
        self.incoming_offsets.len() - 1
    }

    pub fn incoming(&self, node: usize) -> &[usize] {
        &self.incoming[self.incoming_offsets[node]..self.incoming_offsets[node + 1]]
    }

    /// Sum of edge rows per receiver.
    pub fn aggregate(&self, edges: &Tensor2) -> Tensor2 {
        let cols = edges.cols;
        let mut out = Tensor2::zeros(self.num_nodes(), cols);
        for v in 0..self.num_nodes() {
            let row = out.row_mut(v);
            for &e in self.incoming(v) {
                row.iter_mut().zip(edges.row(e)).for_each(|(o, x)| *o += x);
            }
        }
        out
    }
}

fn standardize(x: &Tensor2, mean: &[f64], std: &[f64]) -> Tensor2 {
    let mut out = x.clone();
    for r in 0..out.rows {
        for ((v, m), s) in out.row_mut(r).iter_mut().zip(mean).zip(std) {
            *v = (*v - m) / s;
        }
    }
    out
}

struct NormalizedInputs {
    nodes: Tensor2,
    edges: Tensor2,
    global: Tensor2,
}

fn normalized_inputs(sample: &GraphSample, params: &ModelParams) -> Result<NormalizedInputs, ModelError> {
    let cfg = &params.config;
    sample.check().map_err(ModelError::InvalidSample)?;
    if sample.node_feat.cols != cfg.node_feature_width() {
        return Err(ModelError::DimMismatch {
            expected: cfg.node_feature_width(),
            actual: sample.node_feat.cols,
        });
    }
    if sample.global_feat.len() != GLOBAL_FEATURE_WIDTH {
        return Err(ModelError::DimMismatch {
            expected: GLOBAL_FEATURE_WIDTH,
            actual: sample.global_feat.len(),
        });
    }
    let norm = &params.norm;
    let nodes = if cfg.normalize_node_features {
        standardize(&sample.node_feat, &norm.node_mean, &norm.node_std)
    } else {
        sample.node_feat.clone()
    };
    Ok(NormalizedInputs {
        nodes,
        edges: standardize(&sample.edge_feat, &norm.edge_mean, &norm.edge_std),
        global: Tensor2::from_vec(1, GLOBAL_FEATURE_WIDTH, sample.global_feat.clone()),
    })
}

#[derive(Default)]
struct EncoderTraces {
    node: MlpTrace,
    edge: MlpTrace,
    global: MlpTrace,
}

fn encode_inputs(
    inputs: &NormalizedInputs,
    params: &ModelParams,
    traces: Option<&mut EncoderTraces>,
) -> Result<LatentGraph, ModelError> {
    let (p, l) = (&params.values, &params.layout);
    let (tn, te, tg) = match traces {
        Some(t) => (Some(&mut t.node), Some(&mut t.edge), Some(&mut t.global)),
        None => (None, None, None),
    };
    let nodes = l.node_encoder.forward_blocks(p, &[Input::Rows(&inputs.nodes)], tn)?;
    let edges = l.edge_encoder.forward_blocks(p, &[Input::Rows(&inputs.edges)], te)?;
    let global = l.global_encoder.forward_blocks(p, &[Input::Rows(&inputs.global)], tg)?;
    Ok(LatentGraph {
        nodes,
        edges,
        global: global.data,
    })
}

/// Normalizes the sample's features with the model statistics and encodes them.
pub fn encode(sample: &GraphSample, params: &ModelParams) -> Result<LatentGraph, ModelError> {
    let inputs = normalized_inputs(sample, params)?;
    encode_inputs(&inputs, params, None)
}

#[derive(Default)]
struct RoundTrace {
    edge: MlpTrace,
    node: MlpTrace,
    global: MlpTrace,
    aggregate: Tensor2,
    node_mean: Tensor2,
    edge_mean: Tensor2,
}

fn round_impl(
    lat: &LatentGraph,
    topo: &Topology,
    block: &ProcessorBlock,
    p: &[f64],
    mut trace: Option<&mut RoundTrace>,
) -> Result<LatentGraph, ModelError> {
    let edge_update = block.edge.forward_blocks(
        p,
        &[
            Input::Rows(&lat.edges),
            Input::Gather(&lat.nodes, &topo.senders),
            Input::Gather(&lat.nodes, &topo.receivers),
            Input::Broadcast(&lat.global),
        ],
        trace.as_deref_mut().map(|t| &mut t.edge),
    )?;
    let mut edges = edge_update;
    edges.add_assign(&lat.edges);

    let aggregate = topo.aggregate(&edges);
    let node_update = block.node.forward_blocks(
        p,
        &[
            Input::Rows(&lat.nodes),
            Input::Rows(&aggregate),
            Input::Broadcast(&lat.global),
        ],
        trace.as_deref_mut().map(|t| &mut t.node),
    )?;
    let mut nodes = node_update;
    nodes.add_assign(&lat.nodes);

    let u = Tensor2::from_vec(1, lat.global.len(), lat.global.clone());
    let node_mean = Tensor2::from_vec(1, nodes.cols, nodes.column_mean());
    let edge_mean = Tensor2::from_vec(1, edges.cols, edges.column_mean());
    let global_update = block.global.forward_blocks(
        p,
        &[Input::Rows(&u), Input::Rows(&node_mean), Input::Rows(&edge_mean)],
        trace.as_deref_mut().map(|t| &mut t.global),
    )?;
    let global = lat.global.iter().zip(&global_update.data).map(|(a, b)| a + b).collect();

    if let Some(t) = trace {
        t.aggregate = aggregate;
        t.node_mean = node_mean;
        t.edge_mean = edge_mean;
    }
    Ok(LatentGraph { nodes, edges, global })
}

/// One message-passing round `r` (edge, then node, then global update).
pub fn process_round(
    lat: &LatentGraph,
    topo: &Topology,
    round: usize,
    params: &ModelParams,
) -> Result<LatentGraph, ModelError> {
    let block = params.layout.processor.get(round).ok_or(ModelError::RoundOutOfRange {
        round,
        rounds: params.config.rounds,
    })?;
    round_impl(lat, topo, block, &params.values, None)
}

/// Per-node decoder output split into `l` slots, in normalized target units.
pub fn decode(lat: &LatentGraph, params: &ModelParams) -> Result<Accelerations, ModelError> {
    let out = params.layout.decoder.forward(&params.values, &lat.nodes)?;
    Ok(split_slots(&out, params.config.graph.horizon))
}

/// Splits an `N x 3l` block into `l` slots of `N` 3-vectors.
pub fn split_slots(out: &Tensor2, horizon: usize) -> Accelerations {
    (0..horizon)
        .map(|s| {
            (0..out.rows)
                .map(|i| std::array::from_fn(|d| out.row(i)[3 * s + d]))
                .collect()
        })
        .collect()
}

/// Node order that depends only on positions: lexicographic by (x, y, z).
pub fn canonical_order(sample: &GraphSample) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sample.num_nodes()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (sample.node_pos[a], sample.node_pos[b]);
        p[0].total_cmp(&q[0])
            .then(p[1].total_cmp(&q[1]))
            .then(p[2].total_cmp(&q[2]))
            .then(a.cmp(&b))
    });
    order
}

/// Everything a reverse pass needs.
struct Tape {
    order: Vec<usize>,
    inputs: NormalizedInputs,
    topo: Topology,
    encoders: EncoderTraces,
    latents: Vec<LatentGraph>,
    rounds: Vec<RoundTrace>,
    decoder: MlpTrace,
}

/// Runs the whole network; output rows follow the caller's node order.
fn run(sample: &GraphSample, params: &ModelParams, record: bool) -> Result<(Tensor2, Option<Tape>), ModelError> {
    let order = canonical_order(sample);
    let canon = sample.permuted(&order);
    let inputs = normalized_inputs(&canon, params)?;
    let topo = Topology::of(&canon);
    let (p, layout) = (&params.values, &params.layout);

    let mut encoders = EncoderTraces::default();
    let mut lat = encode_inputs(&inputs, params, record.then_some(&mut encoders))?;
    let mut latents = Vec::new();
    let mut rounds = Vec::new();
    for block in &layout.processor {
        let mut trace = RoundTrace::default();
        let next = round_impl(&lat, &topo, block, p, record.then_some(&mut trace))?;
        if record {
            latents.push(std::mem::replace(&mut lat, next));
            rounds.push(trace);
        } else {
            lat = next;
        }
    }
    let mut decoder = MlpTrace::default();
    let canon_out = layout
        .decoder
        .forward_blocks(p, &[Input::Rows(&lat.nodes)], record.then_some(&mut decoder))?;
    if !canon_out.is_finite() {
        return Err(ModelError::NonFinite("decoder output".into()));
    }

    let mut out = Tensor2::zeros(canon_out.rows, canon_out.cols);
    for (i, &orig) in order.iter().enumerate() {
        out.row_mut(orig).copy_from_slice(canon_out.row(i));
    }
    let tape = record.then(|| {
        latents.push(lat);
        Tape {
            order,
            inputs,
            topo,
            encoders,
            latents,
            rounds,
            decoder,
        }
    });
    Ok((out, tape))
}

/// Decoder output in normalized target units, `N x 3l`, caller's node order.
pub fn forward_normalized(sample: &GraphSample, params: &ModelParams) -> Result<Tensor2, ModelError> {
    run(sample, params, false).map(|(out, _)| out)
}

/// Predicted physical accelerations for the next `l` steps.
pub fn forward(sample: &GraphSample, params: &ModelParams) -> Result<Accelerations, ModelError> {
    let out = forward_normalized(sample, params)?;
    let mut accel = split_slots(&out, params.config.graph.horizon);
    for a in accel.iter_mut().flatten() {
        *a = params.norm.denormalize_target(*a);
    }
    Ok(accel)
}

/// Gradient of a scalar loss with respect to every parameter, in the layout of
/// [`ModelParams::values`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub values: Vec<f64>,
}

impl ParamGradients {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// Records a forward pass so gradients can be taken with [`Self::backward`].
pub struct GradientSession<'a> {
    params: &'a ModelParams,
    tape: Option<Tape>,
}

impl<'a> GradientSession<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        GradientSession { params, tape: None }
    }

    /// Recorded forward pass; returns the normalized `N x 3l` output.
    pub fn forward(&mut self, sample: &GraphSample) -> Result<Tensor2, ModelError> {
        let (out, tape) = run(sample, self.params, true)?;
        self.tape = tape;
        Ok(out)
    }

    /// Reverse pass for `upstream = dLoss/d(output)` of the last recorded forward.
    pub fn backward(&self, upstream: &Tensor2) -> Result<ParamGradients, ModelError> {
        let tape = self.tape.as_ref().ok_or(ModelError::NoForwardRecorded)?;
        let expected = (tape.order.len(), self.params.config.output_width());
        if upstream.shape() != expected {
            return Err(ModelError::DimMismatch {
                expected: expected.0 * expected.1,
                actual: upstream.rows * upstream.cols,
            });
        }
        Ok(backward_impl(tape, self.params, &upstream.gather_rows(&tape.order)))
    }
}

fn backward_impl(tape: &Tape, params: &ModelParams, upstream: &Tensor2) -> ParamGradients {
    let (p, layout) = (&params.values, &params.layout);
    let mut grads = vec![0.0; p.len()];
    let topo = &tape.topo;
    let last = tape.latents.last().unwrap();

    let mut d_nodes = layout
        .decoder
        .backward(
            p,
            &[Input::Rows(&last.nodes)],
            &tape.decoder,
            upstream,
            &mut grads,
            true,
        )
        .remove(0);
    let mut d_edges = Tensor2::zeros(last.edges.rows, last.edges.cols);
    let mut d_global = vec![0.0; last.global.len()];

    for (r, block) in layout.processor.iter().enumerate().rev() {
        let lat = &tape.latents[r];
        let trace = &tape.rounds[r];

        // global: u' = u + g([u, mean v', mean e'])
        let u = Tensor2::from_vec(1, lat.global.len(), lat.global.clone());
        let dg = block.global.backward(
            p,
            &[
                Input::Rows(&u),
                Input::Rows(&trace.node_mean),
                Input::Rows(&trace.edge_mean),
            ],
            &trace.global,
            &Tensor2::from_vec(1, d_global.len(), d_global.clone()),
            &mut grads,
            true,
        );
        let mut d_u: Vec<f64> = d_global.iter().zip(&dg[0].data).map(|(a, b)| a + b).collect();
        let n = d_nodes.rows;
        for i in 0..n {
            d_nodes
                .row_mut(i)
                .iter_mut()
                .zip(&dg[1].data)
                .for_each(|(d, m)| *d += m / n as f64);
        }
        let e = d_edges.rows;
        for k in 0..e {
            d_edges
                .row_mut(k)
                .iter_mut()
                .zip(&dg[2].data)
                .for_each(|(d, m)| *d += m / e as f64);
        }

        // nodes: v' = v + f([v, Σ e', u])
        let dn = block.node.backward(
            p,
            &[
                Input::Rows(&lat.nodes),
                Input::Rows(&trace.aggregate),
                Input::Broadcast(&lat.global),
            ],
            &trace.node,
            &d_nodes,
            &mut grads,
            true,
        );
        d_nodes.add_assign(&dn[0]);
        d_u.iter_mut().zip(&dn[2].data).for_each(|(a, b)| *a += b);
        for (k, &recv) in topo.receivers.iter().enumerate() {
            d_edges
                .row_mut(k)
                .iter_mut()
                .zip(dn[1].row(recv))
                .for_each(|(d, a)| *d += a);
        }

        // edges: e' = e + h([e, v_s, v_r, u])
        let de = block.edge.backward(
            p,
            &[
                Input::Rows(&lat.edges),
                Input::Gather(&lat.nodes, &topo.senders),
                Input::Gather(&lat.nodes, &topo.receivers),
                Input::Broadcast(&lat.global),
            ],
            &trace.edge,
            &d_edges,
            &mut grads,
            true,
        );
        d_edges.add_assign(&de[0]);
        d_nodes.add_assign(&de[1]);
        d_nodes.add_assign(&de[2]);
        d_u.iter_mut().zip(&de[3].data).for_each(|(a, b)| *a += b);
        d_global = d_u;
    }

    let inputs = &tape.inputs;
    layout.node_encoder.backward(
        p,
        &[Input::Rows(&inputs.nodes)],
        &tape.encoders.node,
        &d_nodes,
        &mut grads,
        false,
    );
    layout.edge_encoder.backward(
        p,
        &[Input::Rows(&inputs.edges)],
        &tape.encoders.edge,
        &d_edges,
        &mut grads,
        false,
    );
    layout.global_encoder.backward(
        p,
        &[Input::Rows(&inputs.global)],
        &tape.encoders.global,
        &Tensor2::from_vec(1, d_global.len(), d_global),
        &mut grads,
        false,
    );
    ParamGradients { values: grads }
}
