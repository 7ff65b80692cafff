use swinseg_tensor::rng::SeededRng;
use swinseg_tensor::{Graph, NamedParameterSet, Tensor, Var};

use crate::error::{ModelError, Result};

/// How a parameter tensor is filled at creation time.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Normal(f64),
    Zeros,
    Ones,
    /// `std = sqrt(2 / fan_in)`, for convolutions feeding a ReLU.
    KaimingConv { fan_in: usize },
}

/// One walk over a network's parameters. The init visitor creates tensors,
/// the bind visitor places existing tensors on a graph; both see the exact
/// same names, shapes and order.
pub trait ParamVisitor {
    type Handle: Copy;
    fn param(&mut self, name: String, shape: &[usize], init: Init) -> Result<Self::Handle>;
}

pub struct InitVisitor {
    rng: SeededRng,
    pub out: NamedParameterSet,
}

impl InitVisitor {
    pub fn new(seed: u64) -> Self {
        InitVisitor { rng: SeededRng::derive(seed, 0x1217), out: NamedParameterSet::new() }
    }
}

impl ParamVisitor for InitVisitor {
    type Handle = ();

    fn param(&mut self, name: String, shape: &[usize], init: Init) -> Result<()> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            // draws are rounded to f32 so fresh parameters survive the
            // 32-bit checkpoint format bit-exactly
            Init::Normal(std) => (0..n).map(|_| (self.rng.normal() * std) as f32 as f64).collect(),
            Init::KaimingConv { fan_in } => {
                let std = (2.0 / fan_in as f64).sqrt();
                (0..n).map(|_| (self.rng.normal() * std) as f32 as f64).collect()
            }
        };
        self.out.insert(name, Tensor::new(shape.to_vec(), data)?)?;
        Ok(())
    }
}

/// Name/graph-variable pairs in layout-walk order; the source of gradient
/// extraction after `backward`.
pub type Bindings = Vec<(String, Var)>;

pub struct BindVisitor<'a, 'g> {
    graph: &'g mut Graph,
    params: &'a NamedParameterSet,
    pub bound: Bindings,
}

impl<'a, 'g> BindVisitor<'a, 'g> {
    pub fn new(graph: &'g mut Graph, params: &'a NamedParameterSet) -> Self {
        BindVisitor { graph, params, bound: Vec::new() }
    }

    /// Errors if the walk did not consume every entry of the parameter set.
    pub fn finish(self) -> Result<Bindings> {
        if self.bound.len() != self.params.len() {
            let used: std::collections::HashSet<&str> =
                self.bound.iter().map(|(n, _)| n.as_str()).collect();
            let unused: Vec<String> = self
                .params
                .names()
                .filter(|n| !used.contains(n))
                .map(str::to_owned)
                .collect();
            return Err(ModelError::UnusedParams(unused));
        }
        Ok(self.bound)
    }
}

impl ParamVisitor for BindVisitor<'_, '_> {
    type Handle = Var;

    fn param(&mut self, name: String, shape: &[usize], _init: Init) -> Result<Var> {
        let t = self.params.get(&name).ok_or_else(|| ModelError::MissingParam(name.clone()))?;
        if t.shape() != shape {
            return Err(ModelError::ShapeConflict {
                name,
                expected: shape.to_vec(),
                got: t.shape().to_vec(),
            });
        }
        let var = self.graph.leaf(t.clone(), true)?;
        self.bound.push((name, var));
        Ok(var)
    }
}

// ---- layer layouts ------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct LinearLayout<H> {
    pub weight: H,
    pub bias: Option<H>,
}

#[derive(Debug, Clone, Copy)]
pub struct NormLayout<H> {
    pub gamma: H,
    pub beta: H,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvLayout<H> {
    pub weight: H,
    pub bias: H,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionLayout<H> {
    pub wq: LinearLayout<H>,
    pub wk: LinearLayout<H>,
    pub wv: LinearLayout<H>,
    pub wo: LinearLayout<H>,
    /// Learned relative position bias table, `[(2M-1)^2, heads]`.
    pub rel_bias: Option<H>,
}

#[derive(Debug, Clone, Copy)]
pub struct MlpLayout<H> {
    pub fc1: LinearLayout<H>,
    pub fc2: LinearLayout<H>,
}

#[derive(Debug, Clone, Copy)]
pub struct BlockLayout<H> {
    pub norm1: NormLayout<H>,
    pub attn: AttentionLayout<H>,
    pub norm2: NormLayout<H>,
    pub mlp: MlpLayout<H>,
}

/// W-MSA block followed by its SW-MSA partner.
#[derive(Debug, Clone, Copy)]
pub struct BlockPairLayout<H> {
    pub first: BlockLayout<H>,
    pub second: BlockLayout<H>,
}

#[derive(Debug, Clone, Copy)]
pub struct PatchEmbedLayout<H> {
    pub proj: ConvLayout<H>,
    pub norm: NormLayout<H>,
}

#[derive(Debug, Clone, Copy)]
pub struct MergeLayout<H> {
    pub norm: NormLayout<H>,
    pub reduce: LinearLayout<H>,
}

#[derive(Debug, Clone, Copy)]
pub struct ExpandLayout<H> {
    pub expand: LinearLayout<H>,
    pub norm: NormLayout<H>,
}

const WEIGHT_STD: f64 = 0.02;

pub fn linear<V: ParamVisitor>(
    v: &mut V,
    prefix: &str,
    in_dim: usize,
    out_dim: usize,
    bias: bool,
) -> Result<LinearLayout<V::Handle>> {
    let weight = v.param(format!("{prefix}.weight"), &[in_dim, out_dim], Init::Normal(WEIGHT_STD))?;
    let bias = if bias {
        Some(v.param(format!("{prefix}.bias"), &[out_dim], Init::Zeros)?)
    } else {
        None
    };
    Ok(LinearLayout { weight, bias })
}

pub fn norm<V: ParamVisitor>(v: &mut V, prefix: &str, dim: usize) -> Result<NormLayout<V::Handle>> {
    let gamma = v.param(format!("{prefix}.gamma"), &[dim], Init::Ones)?;
    let beta = v.param(format!("{prefix}.beta"), &[dim], Init::Zeros)?;
    Ok(NormLayout { gamma, beta })
}

pub fn attention<V: ParamVisitor>(
    v: &mut V,
    prefix: &str,
    dim: usize,
    heads: usize,
    window: usize,
    rel_bias: bool,
) -> Result<AttentionLayout<V::Handle>> {
    let wq = linear(v, &format!("{prefix}.wq"), dim, dim, true)?;
    let wk = linear(v, &format!("{prefix}.wk"), dim, dim, true)?;
    let wv = linear(v, &format!("{prefix}.wv"), dim, dim, true)?;
    let wo = linear(v, &format!("{prefix}.wo"), dim, dim, true)?;
    let rel_bias = if rel_bias {
        let rows = (2 * window - 1) * (2 * window - 1);
        Some(v.param(format!("{prefix}.rel_bias"), &[rows, heads], Init::Normal(WEIGHT_STD))?)
    } else {
        None
    };
    Ok(AttentionLayout { wq, wk, wv, wo, rel_bias })
}

pub fn block<V: ParamVisitor>(
    v: &mut V,
    prefix: &str,
    dim: usize,
    heads: usize,
    window: usize,
    rel_bias: bool,
) -> Result<BlockLayout<V::Handle>> {
    let norm1 = norm(v, &format!("{prefix}.norm1"), dim)?;
    let attn = attention(v, &format!("{prefix}.attn"), dim, heads, window, rel_bias)?;
    let norm2 = norm(v, &format!("{prefix}.norm2"), dim)?;
    let mlp = MlpLayout {
        fc1: linear(v, &format!("{prefix}.mlp.fc1"), dim, 4 * dim, true)?,
        fc2: linear(v, &format!("{prefix}.mlp.fc2"), 4 * dim, dim, true)?,
    };
    Ok(BlockLayout { norm1, attn, norm2, mlp })
}

pub fn block_pair<V: ParamVisitor>(
    v: &mut V,
    prefix: &str,
    dim: usize,
    heads: usize,
    window: usize,
    rel_bias: bool,
) -> Result<BlockPairLayout<V::Handle>> {
    Ok(BlockPairLayout {
        first: block(v, &format!("{prefix}.block0"), dim, heads, window, rel_bias)?,
        second: block(v, &format!("{prefix}.block1"), dim, heads, window, rel_bias)?,
    })
}

pub fn conv<V: ParamVisitor>(
    v: &mut V,
    prefix: &str,
    kh: usize,
    kw: usize,
    cin: usize,
    cout: usize,
    init: Init,
) -> Result<ConvLayout<V::Handle>> {
    let weight = v.param(format!("{prefix}.weight"), &[kh, kw, cin, cout], init)?;
    let bias = v.param(format!("{prefix}.bias"), &[cout], Init::Zeros)?;
    Ok(ConvLayout { weight, bias })
}

// Forward helpers shared by both networks.

pub fn apply_linear(g: &mut Graph, x: Var, l: &LinearLayout<Var>) -> Result<Var> {
    Ok(g.linear(x, l.weight, l.bias)?)
}

pub fn apply_norm(g: &mut Graph, x: Var, n: &NormLayout<Var>) -> Result<Var> {
    Ok(g.layer_norm(x, n.gamma, n.beta, crate::LAYER_NORM_EPS)?)
}
