//! Straight-line reimplementation of the slope inner loop (hand-written
//! backprop, plain loops, no graph) compared with the library.

use petri_dish::motif::{instantiate, Motif};
use petri_dish::nn::OptimizerKind;
use petri_dish::petri::{inner_loop, PetriHyper, PetriModel};

struct Mat {
    r: usize,
    c: usize,
    v: Vec<f64>,
}

impl Mat {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.v[i * self.c + j]
    }
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Returns (loss, per-parameter gradients) for params [w0, b0, w1, b1].
fn loss_and_grad(p: &[Vec<f64>], dims: (usize, usize, usize), c: f64, x: &Mat, y: &Mat, l2: f64) -> (f64, Vec<Vec<f64>>) {
    let (i_n, h_n, o_n) = dims;
    let b = x.r;
    let mut a1 = vec![0.0; b * h_n];
    for r in 0..b {
        for h in 0..h_n {
            let mut z = p[1][h];
            for i in 0..i_n {
                z += x.at(r, i) * p[0][i * h_n + h];
            }
            a1[r * h_n + h] = sig(c * z);
        }
    }
    let mut out = vec![0.0; b * o_n];
    let mut loss = 0.0;
    let count = (b * o_n) as f64;
    for r in 0..b {
        for o in 0..o_n {
            let mut z = p[3][o];
            for h in 0..h_n {
                z += a1[r * h_n + h] * p[2][h * o_n + o];
            }
            let q = sig(z);
            let t = y.at(r, o);
            loss -= t * q.ln() + (1.0 - t) * (1.0 - q).ln();
            out[r * o_n + o] = (q - t) / count;
        }
    }
    loss /= count;
    let mut g: Vec<Vec<f64>> = p.iter().map(|t| vec![0.0; t.len()]).collect();
    let mut dz1 = vec![0.0; b * h_n];
    for r in 0..b {
        for o in 0..o_n {
            let d = out[r * o_n + o];
            g[3][o] += d;
            for h in 0..h_n {
                g[2][h * o_n + o] += a1[r * h_n + h] * d;
                dz1[r * h_n + h] += d * p[2][h * o_n + o];
            }
        }
    }
    for r in 0..b {
        for h in 0..h_n {
            let a = a1[r * h_n + h];
            let d = dz1[r * h_n + h] * c * a * (1.0 - a);
            g[1][h] += d;
            for i in 0..i_n {
                g[0][i * h_n + h] += x.at(r, i) * d;
            }
        }
    }
    for (gt, pt) in g.iter_mut().zip(p) {
        for (gv, pv) in gt.iter_mut().zip(pt) {
            *gv += 2.0 * l2 * pv;
        }
    }
    (loss, g)
}

fn oracle(motif_c: f64, model: &PetriModel<f64>, h: &PetriHyper) -> f64 {
    let nets = instantiate::<f64>(&[Motif::slope(motif_c).unwrap()], &model.blueprint, model.theta_init_seed).unwrap();
    let mut p: Vec<Vec<f64>> = nets[0].params.tensors.iter().map(|t| t.data().to_vec()).collect();
    let dims = (h.io_width, h.hidden, h.io_width);
    let mat = |t: &petri_dish::autodiff::Tensor<f64>| Mat {
        r: t.shape()[0],
        c: t.shape()[1],
        v: t.data().to_vec(),
    };
    let (xt, yt) = (mat(&model.synthetic.x_train), mat(&model.synthetic.y_train));
    let (xv, yv) = (mat(&model.synthetic.x_valid), mat(&model.synthetic.y_valid));
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m: Vec<Vec<f64>> = p.iter().map(|t| vec![0.0; t.len()]).collect();
    let mut v = m.clone();
    for step in 1..=h.inner_steps {
        let (_, g) = loss_and_grad(&p, dims, motif_c, &xt, &yt, h.inner_l2);
        for k in 0..p.len() {
            for j in 0..p[k].len() {
                match h.inner_optimizer {
                    OptimizerKind::Sgd => p[k][j] -= h.inner_lr * g[k][j],
                    OptimizerKind::Adam => {
                        m[k][j] = b1 * m[k][j] + (1.0 - b1) * g[k][j];
                        v[k][j] = b2 * v[k][j] + (1.0 - b2) * g[k][j] * g[k][j];
                        let mh = m[k][j] / (1.0 - b1.powi(step as i32));
                        let vh = v[k][j] / (1.0 - b2.powi(step as i32));
                        p[k][j] -= h.inner_lr * mh / (vh + eps).sqrt();
                    }
                }
            }
        }
    }
    loss_and_grad(&p, dims, motif_c, &xv, &yv, 0.0).0
}

#[test]
fn two_slopes_three_steps_match_the_oracle() {
    for opt in [OptimizerKind::Adam, OptimizerKind::Sgd] {
        let h = PetriHyper {
            inner_steps: 3,
            inner_optimizer: opt,
            inner_lr: 0.1,
            hidden: 2,
            io_width: 3,
            samples: 4,
            ..PetriHyper::table2()
        };
        let model = PetriModel::<f64>::new(petri_dish::motif::MotifVariant::ActivationSlope, &h, 21).unwrap();
        // distinct validation inputs so the check sees both tensors
        let mut model = model;
        model.synthetic.x_valid = model.synthetic.x_valid.map(|v| 0.5 * v + 0.1);
        let cs = [0.4, 1.3];
        let motifs: Vec<Motif> = cs.iter().map(|&c| Motif::slope(c).unwrap()).collect();
        let nets = instantiate::<f64>(&motifs, &model.blueprint, model.theta_init_seed).unwrap();
        for differentiable in [false, true] {
            let got = inner_loop(&nets, &model.synthetic, &h, differentiable).unwrap();
            for (k, &c) in cs.iter().enumerate() {
                let want = oracle(c, &model, &h);
                assert!((got[k] - want).abs() <= 1e-10, "{opt:?} c={c}: {} vs {want}", got[k]);
            }
        }
    }
}

#[test]
fn untrained_losses_are_the_initial_forward_pass() {
    let h = PetriHyper {
        inner_steps: 0,
        hidden: 2,
        io_width: 3,
        samples: 4,
        ..PetriHyper::table2()
    };
    let model = PetriModel::<f64>::new(petri_dish::motif::MotifVariant::ActivationSlope, &h, 2).unwrap();
    let motifs: Vec<Motif> = [0.1, 0.7, 0.7].iter().map(|&c| Motif::slope(c).unwrap()).collect();
    let l = model.infer_losses(&motifs).unwrap();
    assert!((l[0] - oracle(0.1, &model, &h)).abs() <= 1e-12);
    assert!((l[1] - oracle(0.7, &model, &h)).abs() <= 1e-12);
    assert_eq!(l[1].to_bits(), l[2].to_bits());
}
