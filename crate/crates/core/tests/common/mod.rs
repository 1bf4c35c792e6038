#![allow(dead_code)]

use hyperrnn::numerics::{Graph, RealTensor, Rng, Var};

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn random_tensor(rows: usize, cols: usize, rng: &mut Rng) -> RealTensor {
    let mut data = vec![0.0; rows * cols];
    rng.fill_normal(&mut data, 1.0);
    RealTensor::matrix(rows, cols, data).unwrap()
}

/// Worst relative error between the tape gradient and central differences
/// for every input of `build`, under the loss `Σ (out + C)²` with a random
/// constant `C`.
pub fn check_primitive(inputs: &[RealTensor], build: impl Fn(&mut Graph, &[Var]) -> Var, rng: &mut Rng) -> f64 {
    let shape = {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &vars);
        g.value(out).shape().to_vec()
    };
    let offset = random_tensor(shape[0], shape[1], rng);
    let loss_of = |values: &[RealTensor]| -> (Graph, Vec<Var>, Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &vars);
        let c = g.constant(offset.clone());
        let shifted = g.add(out, c).unwrap();
        let loss = g.sum_squares(shifted);
        (g, vars, loss)
    };

    let (g, vars, loss) = loss_of(inputs);
    let grads = g.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.wrt(vars[k]).unwrap().data().to_vec();
        let numeric = central_diff(
            |x| {
                let mut values = inputs.to_vec();
                values[k] = RealTensor::new(input.shape().to_vec(), x.to_vec()).unwrap();
                let (g, _, loss) = loss_of(&values);
                g.value(loss).data()[0]
            },
            input.data(),
            1e-6,
        );
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// Prints the one-line verdict for an acceptance criterion and fails the
/// test when it does not hold.
pub fn verdict(id: &str, title: &str, pass: bool, detail: &str) {
    // Straight to the stream so the line survives libtest's output capture.
    let line = format!("criterion {id} [{}] {title}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::Write::write_all(&mut std::io::stderr(), line.as_bytes()).unwrap();
    assert!(pass, "criterion {id} failed: {detail}");
}
