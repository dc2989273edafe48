//! Shared KAN and MLP layers, the parameter store, and parameter accounting.
//!
//! "Shared" means the same weights are applied to every row of the input
//! matrix, so a `(B·N) × d_in` batch of points maps to `(B·N) × d_out`.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::autodiff::{BatchNormState, BatchStats, Graph, Mode, Tensor, Var};
use crate::error::{Error, Result};
use crate::jacobi::{JacobiBasis, JacobiParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormId(usize);

/// Every trainable tensor and batch-norm running state of a model, by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelState {
    names: Vec<String>,
    values: Vec<Tensor>,
    norm_names: Vec<String>,
    norms: Vec<BatchNormState>,
}

impl ModelState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_param(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn add_norm(&mut self, name: impl Into<String>, state: BatchNormState) -> NormId {
        self.norm_names.push(name.into());
        self.norms.push(state);
        NormId(self.norms.len() - 1)
    }

    pub fn param(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn param_values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn norm(&self, id: NormId) -> &BatchNormState {
        &self.norms[id.0]
    }

    pub fn norms(&self) -> impl Iterator<Item = (&str, &BatchNormState)> {
        self.norm_names.iter().map(String::as_str).zip(&self.norms)
    }

    pub fn norms_mut(&mut self) -> &mut [BatchNormState] {
        &mut self.norms
    }

    pub fn param_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Folds batch statistics from a training forward pass into the
    /// running estimates.
    pub fn commit_stats(&mut self, stats: &[(NormId, BatchStats)]) {
        for (id, s) in stats {
            self.norms[id.0].update(s);
        }
    }

    /// Registers every parameter as a trainable leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> Bound<'_> {
        let vars = self.values.iter().map(|t| g.param(t.clone())).collect();
        Bound { vars, state: self }
    }

    /// Registers every parameter as a constant; for inference passes.
    pub fn bind_frozen(&self, g: &mut Graph) -> Bound<'_> {
        let vars = self.values.iter().map(|t| g.constant(t.clone())).collect();
        Bound { vars, state: self }
    }

    /// Uses already-registered leaves, one per parameter in store order.
    pub fn bind_vars(&self, vars: Vec<Var>) -> Result<Bound<'_>> {
        if vars.len() != self.values.len() {
            return Err(Error::Contract(format!(
                "{} vars bound to {} parameters",
                vars.len(),
                self.values.len()
            )));
        }
        Ok(Bound { vars, state: self })
    }
}

/// Parameters of a [`ModelState`] registered on one graph.
pub struct Bound<'a> {
    vars: Vec<Var>,
    state: &'a ModelState,
}

impl Bound<'_> {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn norm(&self, id: NormId) -> &BatchNormState {
        self.state.norm(id)
    }
}

/// Per-pass settings and the batch statistics a training pass produces.
pub struct ForwardCtx<'r> {
    pub mode: Mode,
    pub rng: &'r mut dyn rand::RngCore,
    pub stats: Vec<(NormId, BatchStats)>,
}

impl<'r> ForwardCtx<'r> {
    pub fn new(mode: Mode, rng: &'r mut dyn rand::RngCore) -> Self {
        Self {
            mode,
            rng,
            stats: Vec::new(),
        }
    }
}

/// Draws KAN coefficients i.i.d. from `N(0, 1 / (d_in · (n + 1)))`.
pub fn kan_init<R: Rng + ?Sized>(
    d_in: usize,
    d_out: usize,
    params: &JacobiParams,
    rng: &mut R,
) -> Tensor {
    let nb = params.basis_len();
    let std = (1.0 / (d_in * nb) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let data = (0..nb * d_in * d_out).map(|_| normal.sample(rng)).collect();
    Tensor::new(vec![nb, d_in, d_out], data).expect("shape")
}

/// Shared KAN layer: `tanh` rescaling followed by the Jacobi contraction.
#[derive(Debug, Clone)]
pub struct KanLayer {
    pub d_in: usize,
    pub d_out: usize,
    basis: JacobiBasis,
    weight: ParamId,
}

impl KanLayer {
    pub fn new<R: Rng + ?Sized>(
        state: &mut ModelState,
        name: &str,
        d_in: usize,
        d_out: usize,
        params: JacobiParams,
        rng: &mut R,
    ) -> Self {
        let w = kan_init(d_in, d_out, &params, rng);
        let weight = state.add_param(format!("{name}.omega"), w);
        Self {
            d_in,
            d_out,
            basis: JacobiBasis::new(params),
            weight,
        }
    }

    pub fn params(&self) -> &JacobiParams {
        self.basis.params()
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn param_count(&self) -> usize {
        self.basis.len() * self.d_in * self.d_out
    }

    pub fn forward(&self, g: &mut Graph, bound: &Bound<'_>, x: Var) -> Result<Var> {
        let scaled = g.tanh(x);
        g.basis_contract(scaled, bound.var(self.weight), &self.basis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

/// Shared fully connected layer `x · W + b`.
#[derive(Debug, Clone)]
pub struct MlpLayer {
    pub d_in: usize,
    pub d_out: usize,
    pub activation: Activation,
    weight: ParamId,
    bias: ParamId,
}

impl MlpLayer {
    /// Weights and bias drawn from `U(−1/√d_in, 1/√d_in)`.
    pub fn new<R: Rng + ?Sized>(
        state: &mut ModelState,
        name: &str,
        d_in: usize,
        d_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid range");
        let w: Vec<f64> = (0..d_in * d_out).map(|_| dist.sample(rng)).collect();
        let b: Vec<f64> = (0..d_out).map(|_| dist.sample(rng)).collect();
        let weight = state.add_param(
            format!("{name}.weight"),
            Tensor::new(vec![d_in, d_out], w).expect("shape"),
        );
        let bias = state.add_param(
            format!("{name}.bias"),
            Tensor::new(vec![d_out], b).expect("shape"),
        );
        Self {
            d_in,
            d_out,
            activation,
            weight,
            bias,
        }
    }

    pub fn param_count(&self) -> usize {
        self.d_in * self.d_out + self.d_out
    }

    /// The affine part only; the activation is applied by [`Block`] after
    /// any normalization.
    pub fn affine(&self, g: &mut Graph, bound: &Bound<'_>, x: Var) -> Result<Var> {
        g.linear(x, bound.var(self.weight), bound.var(self.bias))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Kan,
    Mlp,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Kan(KanLayer),
    Mlp(MlpLayer),
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Kan(_) => LayerKind::Kan,
            Layer::Mlp(_) => LayerKind::Mlp,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Layer::Kan(l) => (l.d_in, l.d_out),
            Layer::Mlp(l) => (l.d_in, l.d_out),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Kan(l) => l.param_count(),
            Layer::Mlp(l) => l.param_count(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub channels: usize,
    scale: ParamId,
    shift: ParamId,
    norm: NormId,
}

impl BatchNorm {
    pub fn new(state: &mut ModelState, name: &str, channels: usize, momentum: f64, eps: f64) -> Self {
        let scale = state.add_param(format!("{name}.scale"), Tensor::full(&[channels], 1.0));
        let shift = state.add_param(format!("{name}.shift"), Tensor::zeros(&[channels]));
        let norm = state.add_norm(name, BatchNormState::new(channels, momentum, eps));
        Self {
            channels,
            scale,
            shift,
            norm,
        }
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &Bound<'_>,
        x: Var,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        let (y, stats) = g.batch_norm(
            x,
            bound.var(self.scale),
            bound.var(self.shift),
            bound.norm(self.norm),
            ctx.mode,
        )?;
        if let Some(s) = stats {
            ctx.stats.push((self.norm, s));
        }
        Ok(y)
    }
}

/// Settings shared by every block a builder creates.
#[derive(Debug, Clone, Copy)]
pub struct BlockSettings {
    pub poly: JacobiParams,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

/// One layer with optional batch norm, activation and dropout, applied in
/// that order.
#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub layer: Layer,
    pub norm: Option<BatchNorm>,
    pub dropout: f64,
}

impl Block {
    /// Hidden block: layer, batch norm, ReLU for MLP layers.
    pub fn hidden<R: Rng + ?Sized>(
        state: &mut ModelState,
        name: &str,
        kind: LayerKind,
        d_in: usize,
        d_out: usize,
        settings: &BlockSettings,
        rng: &mut R,
    ) -> Self {
        let layer = Self::make_layer(state, name, kind, d_in, d_out, Activation::Relu, settings, rng);
        let norm = BatchNorm::new(
            state,
            &format!("{name}.bn"),
            d_out,
            settings.bn_momentum,
            settings.bn_eps,
        );
        Self {
            name: name.to_string(),
            layer,
            norm: Some(norm),
            dropout: 0.0,
        }
    }

    /// Output block producing logits: no normalization, no activation.
    pub fn output<R: Rng + ?Sized>(
        state: &mut ModelState,
        name: &str,
        kind: LayerKind,
        d_in: usize,
        d_out: usize,
        settings: &BlockSettings,
        rng: &mut R,
    ) -> Self {
        let layer = Self::make_layer(state, name, kind, d_in, d_out, Activation::None, settings, rng);
        Self {
            name: name.to_string(),
            layer,
            norm: None,
            dropout: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }

    #[allow(clippy::too_many_arguments)]
    fn make_layer<R: Rng + ?Sized>(
        state: &mut ModelState,
        name: &str,
        kind: LayerKind,
        d_in: usize,
        d_out: usize,
        activation: Activation,
        settings: &BlockSettings,
        rng: &mut R,
    ) -> Layer {
        match kind {
            LayerKind::Kan => Layer::Kan(KanLayer::new(
                state,
                &format!("{name}.kan"),
                d_in,
                d_out,
                settings.poly,
                rng,
            )),
            LayerKind::Mlp => Layer::Mlp(MlpLayer::new(
                state,
                &format!("{name}.mlp"),
                d_in,
                d_out,
                activation,
                rng,
            )),
        }
    }

    pub fn d_out(&self) -> usize {
        self.layer.dims().1
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &Bound<'_>,
        x: Var,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        let mut y = match &self.layer {
            Layer::Kan(l) => l.forward(g, bound, x)?,
            Layer::Mlp(l) => l.affine(g, bound, x)?,
        };
        if let Some(bn) = &self.norm {
            y = bn.forward(g, bound, y, ctx)?;
        }
        if let Layer::Mlp(l) = &self.layer {
            if l.activation == Activation::Relu {
                y = g.relu(y);
            }
        }
        if self.dropout > 0.0 {
            y = g.dropout(y, self.dropout, ctx.mode, &mut *ctx.rng)?;
        }
        Ok(y)
    }

    pub fn counts(&self, out: &mut Vec<LayerCount>) {
        let (d_in, d_out) = self.layer.dims();
        out.push(LayerCount {
            name: self.name.clone(),
            kind: match self.layer.kind() {
                LayerKind::Kan => CountKind::Kan {
                    degree: match &self.layer {
                        Layer::Kan(l) => l.params().degree(),
                        Layer::Mlp(_) => unreachable!(),
                    },
                },
                LayerKind::Mlp => CountKind::Mlp,
            },
            d_in,
            d_out,
            params: self.layer.param_count(),
        });
        if let Some(bn) = &self.norm {
            out.push(LayerCount {
                name: format!("{}.bn", self.name),
                kind: CountKind::BatchNorm,
                d_in: bn.channels,
                d_out: bn.channels,
                params: bn.param_count(),
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountKind {
    Kan { degree: usize },
    Mlp,
    BatchNorm,
}

/// One row of a parameter breakdown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCount {
    pub name: String,
    pub kind: CountKind,
    pub d_in: usize,
    pub d_out: usize,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBreakdown {
    pub layers: Vec<LayerCount>,
}

impl ParamBreakdown {
    pub fn total(&self) -> usize {
        self.layers.iter().map(|l| l.params).sum()
    }

    /// `Σ d_in · d_out` over KAN layers: the growth per unit of degree.
    pub fn kan_degree_increment(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l.kind, CountKind::Kan { .. }))
            .map(|l| l.d_in * l.d_out)
            .sum()
    }
}
