//! The block-diagonal super-network trains every member exactly as if it
//! were trained alone.

use petri_dish::autodiff::{Activation, Graph};
use petri_dish::motif::{instantiate, random_encoding, CellEncoding, Motif};
use petri_dish::nn::{OptimizerKind, SuperNetwork};
use petri_dish::petri::{inner_loop, inner_loop_independent, stream_rng, PetriHyper, PetriModel};

const TOL: f64 = 1e-10;

fn slope_motifs(n: usize) -> Vec<Motif> {
    (0..n).map(|i| Motif::slope(0.1 + 0.25 * i as f64).unwrap()).collect()
}

fn cell_motifs(n: usize) -> Vec<Motif> {
    let mut rng = stream_rng(17, 0);
    (0..n)
        .map(|i| {
            if i == 0 {
                Motif::cell(CellEncoding::chain(Activation::Tanh))
            } else {
                Motif::cell(random_encoding(&mut rng))
            }
        })
        .collect()
}

fn slope_hyper(opt: OptimizerKind) -> PetriHyper {
    PetriHyper {
        inner_steps: 12,
        inner_optimizer: opt,
        inner_lr: 0.05,
        hidden: 2,
        io_width: 4,
        samples: 6,
        ..PetriHyper::table2()
    }
}

fn cell_hyper(opt: OptimizerKind) -> PetriHyper {
    PetriHyper {
        inner_steps: 6,
        inner_optimizer: opt,
        hidden: 3,
        io_width: 4,
        samples: 3,
        time_steps: 4,
        ..PetriHyper::table4()
    }
}

fn max_gap(motifs: &[Motif], hyper: &PetriHyper) -> f64 {
    let model = PetriModel::<f64>::new(motifs[0].variant(), hyper, 8).unwrap();
    let nets = instantiate::<f64>(motifs, &model.blueprint, model.theta_init_seed).unwrap();
    let alone = inner_loop_independent(&nets, &model.synthetic, hyper).unwrap();
    let mut worst: f64 = 0.0;
    for differentiable in [false, true] {
        let together = inner_loop(&nets, &model.synthetic, hyper, differentiable).unwrap();
        assert_eq!(together.len(), motifs.len());
        for (a, b) in together.iter().zip(&alone) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

#[test]
fn mlp_members_match_independent_training() {
    for opt in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        for n in [1, 3, 8] {
            let gap = max_gap(&slope_motifs(n), &slope_hyper(opt));
            assert!(gap <= TOL, "{opt:?} N={n}: {gap:e}");
        }
    }
}

#[test]
fn cell_members_match_independent_training() {
    for opt in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        for n in [1, 3, 8] {
            let gap = max_gap(&cell_motifs(n), &cell_hyper(opt));
            assert!(gap <= TOL, "{opt:?} N={n}: {gap:e}");
        }
    }
}

/// Gradient of member `i`'s loss with respect to the stacked parameters is
/// exactly zero outside block `i`.
fn cross_block_zero(motifs: &[Motif], hyper: &PetriHyper) {
    let model = PetriModel::<f64>::new(motifs[0].variant(), hyper, 1).unwrap();
    let nets = instantiate::<f64>(motifs, &model.blueprint, model.theta_init_seed).unwrap();
    let sn = SuperNetwork::build(&nets).unwrap();
    let n = motifs.len();
    for i in 0..n {
        let mut g = Graph::new();
        let x = g.constant(model.synthetic.x_train.clone());
        let y = g.constant(model.synthetic.y_train.clone());
        let data = sn.prepare(&mut g, x, y).unwrap();
        let params = sn.params.to_vars(&mut g);
        let losses = sn.losses(&mut g, &params, &data).unwrap();
        let li = g.slice(losses, 0, i, 1).unwrap();
        let li = g.sum(li);
        let grads = g.backward(li, &params, false).unwrap();
        let mut own_nonzero = false;
        for (name, gv) in sn.params.names.iter().zip(&grads) {
            let t = g.value(*gv);
            let data = t.data();
            let block = data.len() / n;
            for j in 0..n {
                // weights are (N, p, q), biases (1, N·q): contiguous either way
                let b = &data[j * block..(j + 1) * block];
                if j == i {
                    own_nonzero |= b.iter().any(|&v| v != 0.0);
                } else {
                    assert!(b.iter().all(|&v| v == 0.0), "{name}: block {j} leaks into loss {i}");
                }
            }
        }
        assert!(own_nonzero, "member {i} has no gradient at all");
    }
}

#[test]
fn cross_block_gradients_are_exactly_zero() {
    cross_block_zero(&slope_motifs(3), &slope_hyper(OptimizerKind::Adam));
    cross_block_zero(&cell_motifs(3), &cell_hyper(OptimizerKind::Adam));
}

#[test]
fn singleton_super_network_is_the_network() {
    let motifs = slope_motifs(1);
    let hyper = slope_hyper(OptimizerKind::Adam);
    let model = PetriModel::<f64>::new(motifs[0].variant(), &hyper, 4).unwrap();
    let nets = instantiate::<f64>(&motifs, &model.blueprint, model.theta_init_seed).unwrap();
    let a = inner_loop(&nets, &model.synthetic, &hyper, false).unwrap();
    let b = inner_loop_independent(&nets, &model.synthetic, &hyper).unwrap();
    assert_eq!(a, b);
}
