//! Verify reverse-mode gradients against central finite differences on a
//! composite expression, the same machinery the test suite runs over every
//! operation and over micro networks.

use rlsr::gradcheck::{check_gradients, GradCheckConfig};
use rlsr::tensor::Tensor;

fn main() {
    let a = Tensor::<f64>::param(vec![0.3, -0.7, 1.2, 0.05, -1.4, 0.9], &[2, 3]).unwrap();
    let b = Tensor::<f64>::param(vec![0.5, -0.2, 0.8, 1.1, -0.6, 0.25], &[3, 2]).unwrap();

    let report = check_gradients(
        &[a, b],
        |inputs| {
            let prod = inputs[0].matmul(&inputs[1])?;
            let gated = prod.sigmoid()?.mul(&prod.exp()?)?;
            gated.square()?.mean_all()
        },
        &GradCheckConfig::default(),
    )
    .unwrap();

    println!("checked {} coordinates", report.coords_checked);
    println!("max relative error = {:.3e}", report.max_rel_err);
    assert!(report.max_rel_err < 1e-4);
    println!("analytic gradients agree with finite differences");
}
