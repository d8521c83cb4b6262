//! Property-based checks of the invariants.

use petri_dish::autodiff::{Graph, Tensor};
use petri_dish::motif::{crossover_at, mutate, random_encoding, CellEncoding, Motif};
use petri_dish::petri::{normalize, stream_rng};
use petri_dish::stats::spearman;
use proptest::prelude::*;

fn distinct(v: &[f64]) -> bool {
    v.iter().any(|&x| x != v[0])
}

proptest! {
    #[test]
    fn normalize_has_zero_mean_unit_variance(v in prop::collection::vec(-1e3f64..1e3, 2..40)) {
        prop_assume!(distinct(&v));
        let z = normalize(&v).unwrap();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-12);
        prop_assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_ignores_affine_maps(
        v in prop::collection::vec(-100f64..100.0, 2..20),
        a in 0.01f64..100.0,
        b in -100f64..100.0,
    ) {
        prop_assume!(distinct(&v));
        let w: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        prop_assume!(distinct(&w));
        let (zv, zw) = (normalize(&v).unwrap(), normalize(&w).unwrap());
        for (x, y) in zv.iter().zip(&zw) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_preserves_order(v in prop::collection::vec(-10f64..10.0, 2..20)) {
        prop_assume!(distinct(&v));
        let z = normalize(&v).unwrap();
        for i in 0..v.len() {
            for j in 0..v.len() {
                if v[i] < v[j] {
                    prop_assert!(z[i] < z[j]);
                }
            }
        }
    }

    #[test]
    fn spearman_is_bounded_and_symmetric(
        pairs in prop::collection::vec((-10f64..10.0, -10f64..10.0), 3..30),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(distinct(&a) && distinct(&b));
        let r = spearman(&a, &b).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        prop_assert!((r - spearman(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((spearman(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ga_operators_stay_valid(seed in any::<u64>(), rate in 0.0f64..=1.0, cut in 0usize..=12) {
        let mut rng = stream_rng(seed, 0);
        let a = random_encoding(&mut rng);
        let b = random_encoding(&mut rng);
        mutate(&a, rate, &mut rng).validate().unwrap();
        crossover_at(&a, &b, cut).unwrap().validate().unwrap();
    }

    #[test]
    fn full_rate_mutation_changes_every_gene(seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 0);
        let a = random_encoding(&mut rng);
        let b = mutate(&a, 1.0, &mut rng);
        for (x, y) in a.to_string_genes().iter().zip(&b.to_string_genes()) {
            prop_assert_ne!(x, y);
        }
    }

    #[test]
    fn motifs_roundtrip_through_json(seed in any::<u64>(), c in 0.001f64..5.0) {
        let mut rng = stream_rng(seed, 0);
        for m in [Motif::cell(random_encoding(&mut rng)), Motif::slope(c).unwrap()] {
            let s = serde_json::to_string(&m).unwrap();
            prop_assert_eq!(serde_json::from_str::<Motif>(&s).unwrap(), m);
        }
        let e = random_encoding(&mut rng);
        let s = serde_json::to_string(&e).unwrap();
        prop_assert_eq!(serde_json::from_str::<CellEncoding>(&s).unwrap(), e);
    }

    #[test]
    fn tensor_shape_matches_length(r in 1usize..6, c in 1usize..6, extra in 1usize..3) {
        prop_assert!(Tensor::<f64>::new(vec![r, c], vec![0.0; r * c]).is_ok());
        prop_assert!(Tensor::<f64>::new(vec![r, c], vec![0.0; r * c + extra]).is_err());
    }

    #[test]
    fn graph_replay_is_bitwise(v in prop::collection::vec(-3f64..3.0, 6)) {
        let run = || {
            let mut g = Graph::<f64>::new();
            let x = g.variable(Tensor::new(vec![2, 3], v.clone()).unwrap());
            let s = g.sigmoid_slope(x, 0.7);
            let p = g.softmax(s).unwrap();
            let l = g.log(p);
            let t = g.sum(l);
            let gr = g.backward(t, &[x], true).unwrap();
            let q = g.square(gr[0]);
            let q = g.sum(q);
            let gg = g.backward(q, &[x], false).unwrap();
            g.value(gg[0]).data().iter().map(|f| f.to_bits()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}
