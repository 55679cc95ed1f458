//! Small dense and set-pooling networks with hand-written reverse-mode
//! gradients, straight-through Gumbel sampling and an Adam optimiser.

mod adam;
mod dense;
mod gumbel;
mod io;
mod setpool;

pub use adam::{Adam, AdamConfig};
pub use dense::{Activation, DenseCache, DenseNet, Layer};
pub use gumbel::{gumbel_noise, GumbelSample, GumbelSampler};
pub use io::{load_params, save_params, Shapes, MANIFEST_HEADER};
pub use setpool::{Pooling, SetPoolCache, SetPoolNet};

/// `‖a - b‖ / max(‖a‖ + ‖b‖, floor)`: the relative error used by gradient
/// checks.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-10)
}
