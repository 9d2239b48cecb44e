//! The per-subdomain surrogate network: a small convolutional stack mapping
//! the four perturbation fields at time t to time t+1, with the loss,
//! optimizer, initialization, and checkpoint format it needs.

mod adam;
mod checkpoint;
mod conv;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use conv::{schedule_shrink_per_side, ConvLayer, ConvNet, LayerCache, PadMode};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::Tensor3;
use crate::partition::PaddingStrategy;

/// Leaky-ReLU slope for negative inputs.
pub const LEAKY_EPS: f64 = 0.01;

/// Channel widths of the reference architecture, input to output.
pub const REFERENCE_WIDTHS: [usize; 5] = [4, 6, 16, 6, 4];

/// Kernel size of every reference layer.
pub const REFERENCE_KERNEL: usize = 5;

/// Default regularizer added to |target| in the MAPE denominator. The raw
/// definition divides by the target value, which is exactly zero for the
/// initial velocity fields, so a floor is unavoidable.
pub const DEFAULT_MAPE_DELTA: f64 = 1e-6;

/// `x` for non-negative `x`, `eps_act * x` otherwise.
#[inline]
pub fn leaky_relu(x: f64, eps_act: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        eps_act * x
    }
}

/// Derivative of [`leaky_relu`]; the tie at exactly zero takes the
/// negative-side slope.
#[inline]
pub fn leaky_relu_deriv(x: f64, eps_act: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        eps_act
    }
}

/// Mean absolute percentage error and its subgradient with respect to
/// `pred`:
///
/// ```text
/// loss = (100/m) * sum |pred - target| / (|target| + delta)
/// grad = (100/m) * sign(pred - target) / (|target| + delta)
/// ```
///
/// with `sign(0) = 0`, so the gradient vanishes at exact equality.
pub fn mape_loss(pred: &Tensor3, target: &Tensor3, delta: f64) -> Result<(f64, Tensor3)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "mape between shapes {:?} and {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if delta <= 0.0 {
        return Err(Error::Config(format!("mape delta {delta} must be > 0")));
    }
    let m = pred.len() as f64;
    let scale = 100.0 / m;
    let (c, h, w) = pred.shape();
    let mut grad = Tensor3::zeros(c, h, w);
    // Compensated summation: gradient checks difference the loss at h=1e-6,
    // where plain accumulation over thousands of terms costs real digits.
    let mut loss = 0.0;
    let mut carry = 0.0;
    for ((g, p), t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.iter())
        .zip(target.iter())
    {
        let denom = t.abs() + delta;
        let diff = p - t;
        let term = scale * diff.abs() / denom - carry;
        let bumped = loss + term;
        carry = (bumped - loss) - term;
        loss = bumped;
        *g = match diff.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => scale / denom,
            Some(std::cmp::Ordering::Less) => -scale / denom,
            _ => 0.0,
        };
    }
    Ok((loss, grad))
}

/// Padding schedule of a strategy for an `n_layers`-deep network: both
/// strategies run the first layer Valid over the halo-extended input;
/// the zero-pad strategy switches to ZeroSame afterwards while the
/// exact-halo strategy stays Valid throughout.
pub fn pad_schedule(strategy: PaddingStrategy, n_layers: usize) -> Vec<PadMode> {
    let mut pads = vec![PadMode::Valid; n_layers];
    if strategy == PaddingStrategy::ZeroInner {
        for p in pads.iter_mut().skip(1) {
            *p = PadMode::ZeroSame;
        }
    }
    pads
}

/// Cells of halo per side a network consumes under a strategy; equals the
/// total Valid-layer shrink of the schedule.
pub fn halo_width(net: &ConvNet, strategy: PaddingStrategy) -> usize {
    let pads = pad_schedule(strategy, net.n_layers());
    net.layers()
        .iter()
        .zip(&pads)
        .map(|(layer, pad)| pad.shrink_per_side(layer.k()))
        .sum()
}

/// Forward pass under a halo strategy: the input must be the core extended
/// by exactly the strategy's halo on every side, and the output is
/// core-sized.
pub fn net_forward(x: &Tensor3, net: &ConvNet, strategy: PaddingStrategy) -> Result<Tensor3> {
    let halo = halo_width(net, strategy);
    if x.h() <= 2 * halo || x.w() <= 2 * halo {
        return Err(Error::ShapeMismatch(format!(
            "input {}x{} leaves no core after a {halo}-cell halo per side",
            x.h(),
            x.w()
        )));
    }
    net.forward(x, &pad_schedule(strategy, net.n_layers()))
}

/// Glorot-uniform initialization: weights drawn from `uniform(-b, b)` with
/// `b = sqrt(6 / (in_ch*k^2 + out_ch*k^2))` per layer, biases zero, fully
/// determined by the seed.
pub fn init_network_with(widths: &[usize], k: usize, seed: u64) -> Result<ConvNet> {
    let mut net = ConvNet::zeros(widths, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in net.layers_mut() {
        let fan = (layer.in_ch() + layer.out_ch()) * layer.k() * layer.k();
        let b = (6.0 / fan as f64).sqrt();
        for w in layer.weights_mut() {
            *w = rng.gen_range(-b..b);
        }
    }
    Ok(net)
}

/// [`init_network_with`] for the reference architecture.
pub fn init_network(seed: u64) -> ConvNet {
    init_network_with(&REFERENCE_WIDTHS, REFERENCE_KERNEL, seed)
        .expect("reference architecture is valid")
}
