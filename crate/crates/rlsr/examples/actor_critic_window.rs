//! Walk the reinforcement machinery by hand: PSNR-improvement rewards
//! accumulate in a window, discounted returns flow backward through it, and
//! the window folds into a policy loss plus a value-head regression.

use rlsr::losses::{
    compute_reward, discounted_returns, is_window_boundary, sample_action, RlWindow,
};
use rlsr::rng::{stream_rng, streams};
use rlsr::tensor::Tensor;

fn main() {
    println!("discounted_returns([1,0,1], 0.9) = {:?}", discounted_returns(&[1.0, 0.0, 1.0], 0.9).unwrap());

    // Rewards are binary: 1 when measured PSNR improves on the previous
    // training iteration, else 0. The first iteration always improves on
    // the "no model yet" state.
    let psnr_track = [18.2f64, 18.9, 18.7, 19.4, 19.3];
    let mut prev = f64::NEG_INFINITY;
    let mut window = RlWindow::new(5, 0.9).unwrap();
    let mut rng = stream_rng(7, streams::ACTION_SAMPLING);
    for (i, &measured) in psnr_track.iter().enumerate() {
        let reward = compute_reward(measured, prev);
        prev = measured;

        // The policy head would produce these from pooled features; here
        // they are standalone leaves so their gradients are easy to read.
        let mean = Tensor::<f32>::param(vec![measured as f32], &[1]).unwrap();
        let value = Tensor::<f32>::param(vec![0.4], &[1]).unwrap();
        let log_std = Tensor::<f32>::param(vec![-1.0], &[1]).unwrap();
        let (action, log_prob) = sample_action(&mean, &log_std, &mut rng).unwrap();
        println!(
            "iter {i}: psnr {measured:.1} dB, predicted {action:.2}, reward {reward}",
        );
        window.push(reward, log_prob, value.clone(), measured).unwrap();

        let boundary = is_window_boundary(i + 1, 5);
        if boundary {
            let loss = window.rl_loss().unwrap();
            loss.total.backward().unwrap();
            println!(
                "window boundary: rewards {:?}, l_pi {:.4}, l_value {:.4}, d l/d value = {:?}",
                window.rewards(),
                loss.pi.scalar_value(),
                loss.value.scalar_value(),
                value.grad().unwrap()
            );
            window.clear();
        }
    }
}
