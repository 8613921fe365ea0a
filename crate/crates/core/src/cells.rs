//! Recurrent and convolutional building blocks.
//!
//! Both recurrent cells use the gate convention
//!
//! ```text
//! z  = σ(Wx·x + Wh·h_prev + b_z)
//! r  = σ(Wx·x + Wh·h_prev + b_r)
//! h̃  = tanh(Wx·x + Wh·(r ⊙ h_prev) + b_h)
//! h  = z ⊙ h_prev + (1 − z) ⊙ h̃
//! ```
//!
//! where the GConvGRU replaces every product with a Chebyshev graph
//! convolution over a shared scaled Laplacian. Starting from `h0 = 0`, each
//! hidden entry is a convex combination of values in (−1, 1) and therefore
//! stays there.
//!
//! Parameters live in plain [`Tensor`]s; `bind` records them on a tape through
//! a [`ParamBinder`] and returns a bound cell whose gate weights are fused
//! into a few wide matrices, so each step costs one product per side.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{chebyshev_basis, BoundLaplacian};
use crate::params::{prefixed, prefixed_mut, ParamBinder, Parameterized};
use crate::tensor::{Tensor, Var};

/// Draws a tensor from `uniform(−1/√fan_in, 1/√fan_in)`.
pub fn uniform_init<R: Rng>(shape: Vec<usize>, fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let numel = shape.iter().product();
    let data = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("shape matches generated data")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GConvGruConfig {
    pub cheb_k: usize,
    pub input_size: usize,
    pub hidden_size: usize,
    pub bias: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GConvGruCell {
    config: GConvGruConfig,
    theta_xz: Tensor,
    theta_hz: Tensor,
    theta_xr: Tensor,
    theta_hr: Tensor,
    theta_xh: Tensor,
    theta_hh: Tensor,
    biases: Option<[Tensor; 3]>,
}

impl GConvGruCell {
    /// Filter banks drawn uniformly with fan-in `K·F`; biases start at zero.
    pub fn init<R: Rng>(config: GConvGruConfig, rng: &mut R) -> Result<Self> {
        let mut cell = Self::zeros(config)?;
        let (k, f, h) = (config.cheb_k, config.input_size, config.hidden_size);
        cell.theta_xz = uniform_init(vec![k, f, h], k * f, rng);
        cell.theta_hz = uniform_init(vec![k, h, h], k * h, rng);
        cell.theta_xr = uniform_init(vec![k, f, h], k * f, rng);
        cell.theta_hr = uniform_init(vec![k, h, h], k * h, rng);
        cell.theta_xh = uniform_init(vec![k, f, h], k * f, rng);
        cell.theta_hh = uniform_init(vec![k, h, h], k * h, rng);
        Ok(cell)
    }

    pub fn zeros(config: GConvGruConfig) -> Result<Self> {
        let (k, f, h) = (config.cheb_k, config.input_size, config.hidden_size);
        if k < 1 || f < 1 || h < 1 {
            return Err(Error::InvalidArgument(format!(
                "GConvGRU needs K, F_in, H ≥ 1, got {config:?}"
            )));
        }
        let x = || Tensor::zeros(vec![k, f, h]);
        let hh = || Tensor::zeros(vec![k, h, h]);
        Ok(GConvGruCell {
            config,
            theta_xz: x(),
            theta_hz: hh(),
            theta_xr: x(),
            theta_hr: hh(),
            theta_xh: x(),
            theta_hh: hh(),
            biases: config
                .bias
                .then(|| [0, 1, 2].map(|_| Tensor::zeros(vec![h]))),
        })
    }

    pub fn config(&self) -> GConvGruConfig {
        self.config
    }

    pub fn bind<'t>(&self, b: &mut ParamBinder<'t>) -> Result<BoundGConvGru<'t>> {
        let GConvGruConfig {
            cheb_k: k,
            input_size: f,
            hidden_size: h,
            ..
        } = self.config;
        let flat = |v: Var<'t>, rows: usize| v.reshape(vec![k * rows, h]);
        let xz = flat(b.bind(&self.theta_xz), f)?;
        let hz = flat(b.bind(&self.theta_hz), h)?;
        let xr = flat(b.bind(&self.theta_xr), f)?;
        let hr = flat(b.bind(&self.theta_hr), h)?;
        let xh = flat(b.bind(&self.theta_xh), f)?;
        let hh = flat(b.bind(&self.theta_hh), h)?;
        let bias = match &self.biases {
            Some([bz, br, bh]) => {
                let parts = [b.bind(bz), b.bind(br), b.bind(bh)];
                Some(Var::concat(&parts, 0)?)
            }
            None => None,
        };
        Ok(BoundGConvGru {
            config: self.config,
            x_gates: Var::concat(&[xz, xr, xh], 1)?,
            h_gates: Var::concat(&[hz, hr], 1)?,
            h_candidate: hh,
            bias,
        })
    }
}

impl Parameterized for GConvGruCell {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut v = vec![
            ("theta_xz".to_string(), &self.theta_xz),
            ("theta_hz".to_string(), &self.theta_hz),
            ("theta_xr".to_string(), &self.theta_xr),
            ("theta_hr".to_string(), &self.theta_hr),
            ("theta_xh".to_string(), &self.theta_xh),
            ("theta_hh".to_string(), &self.theta_hh),
        ];
        if let Some([bz, br, bh]) = &self.biases {
            v.push(("bias_z".to_string(), bz));
            v.push(("bias_r".to_string(), br));
            v.push(("bias_h".to_string(), bh));
        }
        v
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = vec![
            ("theta_xz".to_string(), &mut self.theta_xz),
            ("theta_hz".to_string(), &mut self.theta_hz),
            ("theta_xr".to_string(), &mut self.theta_xr),
            ("theta_hr".to_string(), &mut self.theta_hr),
            ("theta_xh".to_string(), &mut self.theta_xh),
            ("theta_hh".to_string(), &mut self.theta_hh),
        ];
        if let Some([bz, br, bh]) = &mut self.biases {
            v.push(("bias_z".to_string(), bz));
            v.push(("bias_r".to_string(), br));
            v.push(("bias_h".to_string(), bh));
        }
        v
    }
}

/// Intermediate values of one recurrent step.
#[derive(Debug, Clone, Copy)]
pub struct GateValues<'t> {
    pub update: Var<'t>,
    pub reset: Var<'t>,
    pub candidate: Var<'t>,
    pub hidden: Var<'t>,
}

/// A GConvGRU cell recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundGConvGru<'t> {
    config: GConvGruConfig,
    /// `(K·F)×3H`: update, reset and candidate input filters side by side.
    x_gates: Var<'t>,
    /// `(K·H)×2H`: update and reset hidden filters.
    h_gates: Var<'t>,
    /// `(K·H)×H`
    h_candidate: Var<'t>,
    /// `3H`
    bias: Option<Var<'t>>,
}

impl<'t> BoundGConvGru<'t> {
    pub fn config(&self) -> GConvGruConfig {
        self.config
    }

    /// One step: `x_t: N×F_in`, `h_prev: N×H` → `h_t: N×H`.
    pub fn step(&self, x_t: Var<'t>, h_prev: Var<'t>, lap: &BoundLaplacian<'t>) -> Result<Var<'t>> {
        Ok(self.step_gates(x_t, h_prev, lap)?.hidden)
    }

    pub fn step_gates(
        &self,
        x_t: Var<'t>,
        h_prev: Var<'t>,
        lap: &BoundLaplacian<'t>,
    ) -> Result<GateValues<'t>> {
        let (k, f, h) = (self.config.cheb_k, self.config.input_size, self.config.hidden_size);
        let n = lap.num_nodes();
        let (xs, hs) = (x_t.shape(), h_prev.shape());
        if xs != [n, f] {
            return Err(Error::shape("gconv_gru_step input", &xs, &[n, f]));
        }
        if hs != [n, h] {
            return Err(Error::shape("gconv_gru_step hidden", &hs, &[n, h]));
        }
        let mut x_part = chebyshev_basis(x_t, lap, k)?.matmul(self.x_gates)?;
        if let Some(bias) = self.bias {
            x_part = x_part.add_row(bias)?;
        }
        let h_part = chebyshev_basis(h_prev, lap, k)?.matmul(self.h_gates)?;
        let update = x_part.slice(1, 0, h)?.add(h_part.slice(1, 0, h)?)?.sigmoid();
        let reset = x_part
            .slice(1, h, 2 * h)?
            .add(h_part.slice(1, h, 2 * h)?)?
            .sigmoid();
        let gated = reset.mul(h_prev)?;
        let candidate = x_part
            .slice(1, 2 * h, 3 * h)?
            .add(chebyshev_basis(gated, lap, k)?.matmul(self.h_candidate)?)?
            .tanh();
        let hidden = candidate.add(update.mul(h_prev.sub(candidate)?)?)?;
        Ok(GateValues {
            update,
            reset,
            candidate,
            hidden,
        })
    }

    /// Runs the cell over `sequence: T×N×F_in` from `h0` (zeros when `None`).
    ///
    /// Returns the stacked hidden states `T×N×H` and the final state `N×H`.
    pub fn unroll(
        &self,
        sequence: Var<'t>,
        lap: &BoundLaplacian<'t>,
        h0: Option<Var<'t>>,
    ) -> Result<(Var<'t>, Var<'t>)> {
        let states = self.run(sequence, lap, h0)?;
        let last = *states.last().expect("run yields at least one state");
        Ok((Var::stack(&states, 0)?, last))
    }

    /// Final hidden state only; skips stacking the intermediate states.
    pub fn unroll_final(
        &self,
        sequence: Var<'t>,
        lap: &BoundLaplacian<'t>,
        h0: Option<Var<'t>>,
    ) -> Result<Var<'t>> {
        let states = self.run(sequence, lap, h0)?;
        Ok(*states.last().expect("run yields at least one state"))
    }

    fn run(
        &self,
        sequence: Var<'t>,
        lap: &BoundLaplacian<'t>,
        h0: Option<Var<'t>>,
    ) -> Result<Vec<Var<'t>>> {
        let s = sequence.shape();
        let (n, f, h) = (lap.num_nodes(), self.config.input_size, self.config.hidden_size);
        if s.len() != 3 || s[1] != n || s[2] != f {
            return Err(Error::shape("gconv_gru_unroll", &s, &[0, n, f]));
        }
        if s[0] == 0 {
            return Err(Error::InvalidArgument("empty sequence".into()));
        }
        let tape = sequence.tape();
        let mut state = match h0 {
            Some(h0) => h0,
            None => tape.constant(Tensor::zeros(vec![n, h])),
        };
        let mut states = Vec::with_capacity(s[0]);
        for t in 0..s[0] {
            let x_t = sequence.slice(0, t, t + 1)?.reshape(vec![n, f])?;
            state = self.step(x_t, state, lap)?;
            states.push(state);
        }
        Ok(states)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruConfig {
    pub input_size: usize,
    pub hidden_size: usize,
}

/// Standard GRU with input-side `F×H` and hidden-side `H×H` weights per gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    config: GruConfig,
    w_xz: Tensor,
    w_hz: Tensor,
    w_xr: Tensor,
    w_hr: Tensor,
    w_xh: Tensor,
    w_hh: Tensor,
    b_z: Tensor,
    b_r: Tensor,
    b_h: Tensor,
}

impl GruCell {
    pub fn init<R: Rng>(config: GruConfig, rng: &mut R) -> Result<Self> {
        let mut cell = Self::zeros(config)?;
        let (f, h) = (config.input_size, config.hidden_size);
        cell.w_xz = uniform_init(vec![f, h], f, rng);
        cell.w_hz = uniform_init(vec![h, h], h, rng);
        cell.w_xr = uniform_init(vec![f, h], f, rng);
        cell.w_hr = uniform_init(vec![h, h], h, rng);
        cell.w_xh = uniform_init(vec![f, h], f, rng);
        cell.w_hh = uniform_init(vec![h, h], h, rng);
        Ok(cell)
    }

    pub fn zeros(config: GruConfig) -> Result<Self> {
        let (f, h) = (config.input_size, config.hidden_size);
        if f < 1 || h < 1 {
            return Err(Error::InvalidArgument(format!(
                "GRU needs F_in, H ≥ 1, got {config:?}"
            )));
        }
        Ok(GruCell {
            config,
            w_xz: Tensor::zeros(vec![f, h]),
            w_hz: Tensor::zeros(vec![h, h]),
            w_xr: Tensor::zeros(vec![f, h]),
            w_hr: Tensor::zeros(vec![h, h]),
            w_xh: Tensor::zeros(vec![f, h]),
            w_hh: Tensor::zeros(vec![h, h]),
            b_z: Tensor::zeros(vec![h]),
            b_r: Tensor::zeros(vec![h]),
            b_h: Tensor::zeros(vec![h]),
        })
    }

    pub fn config(&self) -> GruConfig {
        self.config
    }

    pub fn bind<'t>(&self, b: &mut ParamBinder<'t>) -> Result<BoundGru<'t>> {
        let xz = b.bind(&self.w_xz);
        let hz = b.bind(&self.w_hz);
        let xr = b.bind(&self.w_xr);
        let hr = b.bind(&self.w_hr);
        let xh = b.bind(&self.w_xh);
        let hh = b.bind(&self.w_hh);
        let bias = [b.bind(&self.b_z), b.bind(&self.b_r), b.bind(&self.b_h)];
        Ok(BoundGru {
            config: self.config,
            x_gates: Var::concat(&[xz, xr, xh], 1)?,
            h_gates: Var::concat(&[hz, hr], 1)?,
            h_candidate: hh,
            bias: Var::concat(&bias, 0)?,
        })
    }
}

impl Parameterized for GruCell {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w_xz".into(), &self.w_xz),
            ("w_hz".into(), &self.w_hz),
            ("w_xr".into(), &self.w_xr),
            ("w_hr".into(), &self.w_hr),
            ("w_xh".into(), &self.w_xh),
            ("w_hh".into(), &self.w_hh),
            ("b_z".into(), &self.b_z),
            ("b_r".into(), &self.b_r),
            ("b_h".into(), &self.b_h),
        ]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("w_xz".into(), &mut self.w_xz),
            ("w_hz".into(), &mut self.w_hz),
            ("w_xr".into(), &mut self.w_xr),
            ("w_hr".into(), &mut self.w_hr),
            ("w_xh".into(), &mut self.w_xh),
            ("w_hh".into(), &mut self.w_hh),
            ("b_z".into(), &mut self.b_z),
            ("b_r".into(), &mut self.b_r),
            ("b_h".into(), &mut self.b_h),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundGru<'t> {
    config: GruConfig,
    x_gates: Var<'t>,
    h_gates: Var<'t>,
    h_candidate: Var<'t>,
    bias: Var<'t>,
}

impl<'t> BoundGru<'t> {
    /// One step on row-batched inputs: `x_t: B×F`, `h_prev: B×H`.
    pub fn step(&self, x_t: Var<'t>, h_prev: Var<'t>) -> Result<Var<'t>> {
        let x_part = x_t.matmul(self.x_gates)?.add_row(self.bias)?;
        self.step_projected(x_part, h_prev)
    }

    /// Step with the input projection `x·Wx + b` (`B×3H`) already computed.
    fn step_projected(&self, x_part: Var<'t>, h_prev: Var<'t>) -> Result<Var<'t>> {
        let h = self.config.hidden_size;
        let hs = h_prev.shape();
        if hs.len() != 2 || hs[1] != h || x_part.shape()[0] != hs[0] {
            return Err(Error::shape("gru_step hidden", &hs, &[x_part.shape()[0], h]));
        }
        let h_part = h_prev.matmul(self.h_gates)?;
        let update = x_part.slice(1, 0, h)?.add(h_part.slice(1, 0, h)?)?.sigmoid();
        let reset = x_part
            .slice(1, h, 2 * h)?
            .add(h_part.slice(1, h, 2 * h)?)?
            .sigmoid();
        let candidate = x_part
            .slice(1, 2 * h, 3 * h)?
            .add(reset.mul(h_prev)?.matmul(self.h_candidate)?)?
            .tanh();
        candidate.add(update.mul(h_prev.sub(candidate)?)?)
    }

    /// Runs over `sequence: T×F` (one row per timestep), optionally in reverse
    /// time order. Returns per-step states `1×H` indexed by original time.
    pub fn run(&self, sequence: Var<'t>, h0: Option<Var<'t>>, reverse: bool) -> Result<Vec<Var<'t>>> {
        let s = sequence.shape();
        let (f, h) = (self.config.input_size, self.config.hidden_size);
        if s.len() != 2 || s[1] != f {
            return Err(Error::shape("gru_unroll", &s, &[0, f]));
        }
        let steps = s[0];
        if steps == 0 {
            return Err(Error::InvalidArgument("empty sequence".into()));
        }
        let projected = sequence.matmul(self.x_gates)?.add_row(self.bias)?;
        let mut state = match h0 {
            Some(h0) => h0,
            None => sequence.tape().constant(Tensor::zeros(vec![1, h])),
        };
        let mut states = vec![state; steps];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..steps).rev())
        } else {
            Box::new(0..steps)
        };
        for t in order {
            state = self.step_projected(projected.slice(0, t, t + 1)?, state)?;
            states[t] = state;
        }
        Ok(states)
    }

    /// Stacked states `T×H` and the final state `1×H`.
    pub fn unroll(&self, sequence: Var<'t>, h0: Option<Var<'t>>) -> Result<(Var<'t>, Var<'t>)> {
        let states = self.run(sequence, h0, false)?;
        let last = *states.last().expect("non-empty");
        Ok((Var::concat(&states, 0)?, last))
    }
}

/// Forward and backward GRU cells of identical dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct BidirectionalGru {
    forward: GruCell,
    backward: GruCell,
}

impl BidirectionalGru {
    pub fn new(forward: GruCell, backward: GruCell) -> Result<Self> {
        if forward.config() != backward.config() {
            return Err(Error::InvalidArgument(
                "bidirectional GRU cells must have identical dimensions".into(),
            ));
        }
        Ok(BidirectionalGru { forward, backward })
    }

    pub fn init<R: Rng>(config: GruConfig, rng: &mut R) -> Result<Self> {
        Self::new(GruCell::init(config, rng)?, GruCell::init(config, rng)?)
    }

    pub fn config(&self) -> GruConfig {
        self.forward.config()
    }

    pub fn bind<'t>(&self, b: &mut ParamBinder<'t>) -> Result<BoundBidirectionalGru<'t>> {
        Ok(BoundBidirectionalGru {
            forward: self.forward.bind(b)?,
            backward: self.backward.bind(b)?,
        })
    }
}

impl Parameterized for BidirectionalGru {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut v = prefixed("fwd", self.forward.named_params());
        v.extend(prefixed("bwd", self.backward.named_params()));
        v
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = prefixed_mut("fwd", self.forward.named_params_mut());
        v.extend(prefixed_mut("bwd", self.backward.named_params_mut()));
        v
    }
}

pub struct BidirectionalOutput<'t> {
    /// `T×2H`: forward and backward states side by side for each timestep.
    pub outputs: Var<'t>,
    /// Forward state after the last timestep, `1×H`.
    pub final_forward: Var<'t>,
    /// Backward state after consuming the first timestep, `1×H`.
    pub final_backward: Var<'t>,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundBidirectionalGru<'t> {
    forward: BoundGru<'t>,
    backward: BoundGru<'t>,
}

impl<'t> BoundBidirectionalGru<'t> {
    pub fn unroll(&self, sequence: Var<'t>) -> Result<BidirectionalOutput<'t>> {
        let fwd = self.forward.run(sequence, None, false)?;
        let bwd = self.backward.run(sequence, None, true)?;
        let rows = fwd
            .iter()
            .zip(&bwd)
            .map(|(f, b)| Var::concat(&[*f, *b], 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(BidirectionalOutput {
            outputs: Var::concat(&rows, 0)?,
            final_forward: *fwd.last().expect("non-empty"),
            final_backward: bwd[0],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalConvConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
}

/// Same-padded 1-D convolution over the time axis of a `C_in×T` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalConv {
    config: TemporalConvConfig,
    weight: Tensor,
    bias: Tensor,
}

impl TemporalConv {
    pub fn init<R: Rng>(config: TemporalConvConfig, rng: &mut R) -> Result<Self> {
        let mut conv = Self::zeros(config)?;
        let fan_in = config.in_channels * config.kernel_size;
        conv.weight = uniform_init(conv.weight.shape().to_vec(), fan_in, rng);
        Ok(conv)
    }

    pub fn zeros(config: TemporalConvConfig) -> Result<Self> {
        if config.kernel_size % 2 == 0 || config.in_channels == 0 || config.out_channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "temporal conv needs positive channels and an odd kernel, got {config:?}"
            )));
        }
        Ok(TemporalConv {
            config,
            weight: Tensor::zeros(vec![
                config.out_channels,
                config.in_channels,
                config.kernel_size,
            ]),
            bias: Tensor::zeros(vec![config.out_channels]),
        })
    }

    /// Builds a convolution from explicit `C_out×C_in×K` weights.
    pub fn from_weights(weight: Tensor, bias: Tensor) -> Result<Self> {
        let s = weight.shape();
        if s.len() != 3 || bias.shape() != [s[0]] {
            return Err(Error::shape("temporal_conv", s, bias.shape()));
        }
        let config = TemporalConvConfig {
            out_channels: s[0],
            in_channels: s[1],
            kernel_size: s[2],
        };
        Self::zeros(config)?;
        Ok(TemporalConv {
            config,
            weight,
            bias,
        })
    }

    pub fn config(&self) -> TemporalConvConfig {
        self.config
    }

    pub fn bind<'t>(&self, b: &mut ParamBinder<'t>) -> BoundTemporalConv<'t> {
        BoundTemporalConv {
            weight: b.bind(&self.weight),
            bias: b.bind(&self.bias),
        }
    }
}

impl Parameterized for TemporalConv {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("weight".into(), &mut self.weight),
            ("bias".into(), &mut self.bias),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundTemporalConv<'t> {
    weight: Var<'t>,
    bias: Var<'t>,
}

impl<'t> BoundTemporalConv<'t> {
    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        x.conv1d(self.weight, Some(self.bias))
    }
}

/// Affine map `x·W + b` with `W: F×G`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    /// `W ~ uniform(−1/√F, 1/√F)`, `b = 0`.
    pub fn init<R: Rng>(in_features: usize, out_features: usize, rng: &mut R) -> Result<Self> {
        let mut l = Self::zeros(in_features, out_features)?;
        l.weight = uniform_init(vec![in_features, out_features], in_features, rng);
        Ok(l)
    }

    pub fn zeros(in_features: usize, out_features: usize) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::InvalidArgument("linear layer with zero width".into()));
        }
        Ok(Linear {
            weight: Tensor::zeros(vec![in_features, out_features]),
            bias: Tensor::zeros(vec![out_features]),
        })
    }

    pub fn from_weights(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.shape()[1]] {
            return Err(Error::shape("linear", weight.shape(), bias.shape()));
        }
        Ok(Linear { weight, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn bind<'t>(&self, b: &mut ParamBinder<'t>) -> BoundLinear<'t> {
        BoundLinear {
            weight: b.bind(&self.weight),
            bias: b.bind(&self.bias),
        }
    }
}

impl Parameterized for Linear {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("weight".into(), &mut self.weight),
            ("bias".into(), &mut self.bias),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear<'t> {
    weight: Var<'t>,
    bias: Var<'t>,
}

impl<'t> BoundLinear<'t> {
    /// `x: M×F` → `M×G`.
    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        x.matmul(self.weight)?.add_row(self.bias)
    }
}
