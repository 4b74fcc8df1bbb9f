//! Build a small expression graph, differentiate it in reverse mode, and fit
//! a line with the ADAM optimizer.

use rlsr::tensor::{Adam, AdamConfig, Tensor};

fn main() {
    // y = sigmoid(w * x + b), a single neuron on a batch of three inputs.
    let x = Tensor::<f64>::from_vec(vec![-1.0, 0.0, 2.0], &[3, 1]).unwrap();
    let w = Tensor::<f64>::param(vec![0.5], &[1, 1]).unwrap();
    let b = Tensor::<f64>::param(vec![0.1], &[1]).unwrap();
    let y = x.matmul(&w).unwrap().add_row_bias(&b).unwrap().sigmoid().unwrap();
    let loss = y.square().unwrap().mean_all().unwrap();
    loss.backward().unwrap();
    println!("forward  y = {:?}", y.to_f64_vec());
    println!("d loss / d w = {:?}", w.grad().unwrap());
    println!("d loss / d b = {:?}", b.grad().unwrap());

    // Fit y = 2x - 1 from ten noiseless samples.
    let xs: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
    let ts: Vec<f64> = xs.iter().map(|v| 2.0 * v - 1.0).collect();
    let x = Tensor::<f64>::from_vec(xs, &[10, 1]).unwrap();
    let t = Tensor::<f64>::from_vec(ts, &[10, 1]).unwrap();
    let w = Tensor::<f64>::param(vec![0.0], &[1, 1]).unwrap();
    let b = Tensor::<f64>::param(vec![0.0], &[1]).unwrap();
    let mut adam = Adam::new(
        vec![("w".into(), w.clone()), ("b".into(), b.clone())],
        AdamConfig { lr: 0.05, ..AdamConfig::default() },
    )
    .unwrap();
    for step in 0..400 {
        let pred = x.matmul(&w).unwrap().add_row_bias(&b).unwrap();
        let loss = pred.sub(&t).unwrap().square().unwrap().mean_all().unwrap();
        adam.zero_grads();
        loss.backward().unwrap();
        adam.step().unwrap();
        if step % 100 == 99 {
            println!("step {:3}  mse {:.2e}", step + 1, loss.scalar_value());
        }
    }
    println!(
        "fitted  w = {:.4} (want 2), b = {:.4} (want -1)",
        w.to_f64_vec()[0],
        b.to_f64_vec()[0]
    );
}
