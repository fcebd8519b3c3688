//! ReLU nets and temporal convolutional nets (TCNs).
//!
//! A TCN with context length `m` maps `u` to
//! `y_t = net(u_{t-m}, ..., u_t)` with zero padding for negative indices.

pub mod filter;
pub mod fit;
pub mod plan;
pub mod volterra;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iomap::IoMap;
use crate::seqcore::Sequence;

pub use filter::{relu_filter_map, truncate_filter, truncation_bound, ExpFilter, ReluFilterMap};
pub use fit::{fit_tcn, Architecture, FitReport, TrainSpec};
pub use plan::{theorem1_plan, tradeoff_table, Theorem1Plan};
pub use volterra::{
    compare_parsimony, relu_polynomial_errors, term_count, volterra_fit, ParsimonyReport, ParsimonyRow, VolterraModel,
    VolterraReport,
};

const ZERO_TOL: f64 = 1e-12;

/// Affine map `x -> W x + b` with `W` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let layer = Self { rows, cols, weights, bias };
        layer.validate()?;
        Ok(layer)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, weights: vec![0.0; rows * cols], bias: vec![0.0; rows] }
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("layer", "empty affine map"));
        }
        if self.weights.len() != self.rows * self.cols {
            return Err(Error::DimensionMismatch { expected: self.rows * self.cols, got: self.weights.len() });
        }
        if self.bias.len() != self.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, got: self.bias.len() });
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(i, b)| {
            let row = &self.weights[i * self.cols..(i + 1) * self.cols];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }

    pub fn param_count(&self) -> usize {
        self.rows * self.cols + self.rows
    }
}

/// `A_k o ReLU o A_{k-1} o ... o ReLU o A_1` with scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetRepr", into = "NetRepr")]
pub struct ReluNet {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetRepr {
    layers: Vec<Layer>,
}

impl TryFrom<NetRepr> for ReluNet {
    type Error = Error;
    fn try_from(r: NetRepr) -> Result<Self> {
        ReluNet::new(r.layers)
    }
}

impl From<ReluNet> for NetRepr {
    fn from(n: ReluNet) -> Self {
        NetRepr { layers: n.layers }
    }
}

impl ReluNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let net = Self { layers };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let last = self.layers.last().ok_or_else(|| Error::invalid("layers", "net has no layers"))?;
        for layer in &self.layers {
            layer.validate()?;
        }
        for pair in self.layers.windows(2) {
            if pair[1].cols != pair[0].rows {
                return Err(Error::DimensionMismatch { expected: pair[0].rows, got: pair[1].cols });
            }
        }
        if last.rows != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: last.rows });
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the layers; shapes must be left unchanged.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    /// Number of affine maps.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Largest hidden dimension (0 for a purely affine net).
    pub fn width(&self) -> usize {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.rows).max().unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(self.eval_unchecked(x))
    }

    /// Evaluation without the input length check; extra entries are ignored
    /// and missing ones read as zero.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let mut cur: Vec<f64> = x.to_vec();
        cur.resize(self.input_dim(), 0.0);
        let mut next = Vec::new();
        let k = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i + 1 < k {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Shifts the output bias so that `net(0) = 0`; returns the removed offset.
    pub fn center_at_zero(&mut self) -> f64 {
        let offset = self.eval_unchecked(&[]);
        if let Some(last) = self.layers.last_mut() {
            last.bias[0] -= offset;
        }
        offset
    }
}

/// `y_t = net(u_{t-m}, ..., u_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TcnRepr", into = "TcnRepr")]
pub struct TcnModel {
    pub m: usize,
    pub net: ReluNet,
    /// `|net(0, ..., 0)| <= 1e-12`; the model is time-invariant exactly when
    /// this holds.
    pub zero_at_zero: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TcnRepr {
    m: usize,
    layers: Vec<Layer>,
    #[serde(default)]
    zero_at_zero: Option<bool>,
}

impl TryFrom<TcnRepr> for TcnModel {
    type Error = Error;
    fn try_from(r: TcnRepr) -> Result<Self> {
        let model = TcnModel::new(r.m, ReluNet::new(r.layers)?)?;
        if r.zero_at_zero.is_some_and(|z| z != model.zero_at_zero) {
            return Err(Error::Parse("zero_at_zero flag does not match net(0)".into()));
        }
        Ok(model)
    }
}

impl From<TcnModel> for TcnRepr {
    fn from(t: TcnModel) -> Self {
        TcnRepr { m: t.m, layers: t.net.layers, zero_at_zero: Some(t.zero_at_zero) }
    }
}

impl TcnModel {
    pub fn new(m: usize, net: ReluNet) -> Result<Self> {
        if net.input_dim() != m + 1 {
            return Err(Error::DimensionMismatch { expected: m + 1, got: net.input_dim() });
        }
        let zero_at_zero = net.eval_unchecked(&[]).abs() <= ZERO_TOL;
        Ok(Self { m, net, zero_at_zero })
    }

    pub fn apply(&self, u: &Sequence, t: usize) -> f64 {
        self.net.eval_unchecked(&u.window_slice(t, self.m))
    }
}

/// `(F^ u)_t` for a TCN.
pub fn tcn_apply(model: &TcnModel, u: &Sequence, t: usize) -> f64 {
    model.apply(u, t)
}

impl IoMap for TcnModel {
    fn eval(&self, u: &Sequence, t: usize) -> Result<f64> {
        Ok(self.apply(u, t))
    }

    fn declared_time_invariant(&self) -> bool {
        self.zero_at_zero
    }

    fn describe(&self) -> String {
        format!("tcn(m={}, width={}, depth={})", self.m, self.net.width(), self.net.depth())
    }
}
