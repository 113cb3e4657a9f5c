use gradlab_core::model::{Mlp, Model};
use gradlab_core::numerics::RngState;

fn central_difference(model: &Model, x: &[f64], class: usize, h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = model.score(&p, class).unwrap();
            p[i] = x[i] - h;
            let down = model.score(&p, class).unwrap();
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

#[test]
fn backprop_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let mut draws = RngState::new(0xfd, case).normals();
        let d = 4 + (case as usize % 13);
        let hidden = 3 + (case as usize % 17);
        let classes = 2 + (case as usize % 5);
        let mlp = Mlp::random(&[d, hidden, classes], case).unwrap();
        let model = Model::Mlp(mlp);
        let x: Vec<f64> = (0..d).map(|_| draws.next_normal()).collect();
        let class = case as usize % classes;
        let g = model.input_gradient(&x, class).unwrap();
        let fd = central_difference(&model, &x, class, 1e-5);
        worst = worst.max(relative_error(&g, &fd));
    }
    assert!(worst <= 1e-5, "worst relative error {worst}");
}

#[test]
fn deeper_networks_match_too() {
    for case in 0..20u64 {
        let model = Model::Mlp(Mlp::random(&[7, 9, 6, 3], 100 + case).unwrap());
        let mut draws = RngState::new(0xdee, case).normals();
        let x: Vec<f64> = (0..7).map(|_| draws.next_normal()).collect();
        let g = model.input_gradient(&x, 1).unwrap();
        let fd = central_difference(&model, &x, 1, 1e-5);
        assert!(relative_error(&g, &fd) <= 1e-5);
    }
}

#[test]
fn analytic_models() {
    let lin = Model::linear(vec![1.0, 2.0], 0.0).unwrap();
    assert_eq!(lin.forward(&[3.0, 4.0]).unwrap(), vec![11.0]);
    assert_eq!(lin.input_gradient(&[-7.0, 0.1], 0).unwrap(), vec![1.0, 2.0]);
    let quad = Model::half_squared_norm(2).unwrap();
    assert_eq!(quad.forward(&[3.0, 4.0]).unwrap(), vec![12.5]);
    assert_eq!(quad.input_gradient(&[3.0, 4.0], 0).unwrap(), vec![3.0, 4.0]);
    let sin = Model::sinusoid(3.0).unwrap();
    let fd = central_difference(&sin, &[0.7], 0, 1e-5);
    assert!(relative_error(&sin.input_gradient(&[0.7], 0).unwrap(), &fd) <= 1e-9);
}
