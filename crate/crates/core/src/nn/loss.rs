/// Smooth-L1 (Huber with transition at `beta`) averaged over the components,
/// with its gradient with respect to `pred`.
pub fn smooth_l1<const N: usize>(pred: &[f64; N], target: &[f64; N], beta: f64) -> (f64, [f64; N]) {
    assert!(beta > 0.0, "beta must be positive");
    let mut loss = 0.0;
    let mut grad = [0.0; N];
    for i in 0..N {
        let e = pred[i] - target[i];
        if e.abs() < beta {
            loss += 0.5 * e * e / beta;
            grad[i] = e / beta;
        } else {
            loss += e.abs() - 0.5 * beta;
            grad[i] = e.signum();
        }
    }
    let n = N as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}
