mod common;

use lipext::pipeline::{mae, smape, summary_stats};
use lipext::swarm::KqObjective;
use lipext::{
    katetov_shift, split_indices, BaseMetric, CompositionMetric, Dataset, ExtensionKind,
    ExtensionModel, IndexedSample, PhiAtom, PhiCombination, ScaleFit,
};
use proptest::prelude::*;

use common::*;

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, dim)
}

fn base() -> impl Strategy<Value = BaseMetric> {
    prop::sample::select(BaseMetric::ALL.to_vec())
}

fn phi() -> impl Strategy<Value = PhiCombination> {
    prop::collection::vec(
        prop::option::weighted(0.5, 0.01..5.0f64),
        PhiAtom::ALL.len(),
    )
    .prop_filter("some atom", |c| c.iter().any(Option::is_some))
    .prop_map(|c| {
        let (atoms, coefs): (Vec<_>, Vec<_>) = PhiAtom::ALL
            .iter()
            .zip(c)
            .filter_map(|(&a, c)| c.map(|c| (a, c)))
            .unzip();
        PhiCombination::new(atoms, coefs).unwrap()
    })
}

/// Points in the unit cube and index values in `[0, 100)`, without
/// duplicate points.
fn sample(max_n: usize) -> impl Strategy<Value = IndexedSample> {
    (1usize..=4, 2usize..=max_n)
        .prop_flat_map(|(dim, n)| {
            (
                prop::collection::vec(prop::collection::vec(0.0..1.0f64, dim), n),
                prop::collection::vec(0.0..100.0f64, n),
            )
        })
        .prop_filter("distinct points", |(p, _)| {
            (0..p.len()).all(|i| (i + 1..p.len()).all(|j| p[i] != p[j]))
        })
        .prop_map(|(p, v)| IndexedSample::new(p, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn composition_is_a_metric(
        b in base(), phi in phi(),
        (x, y, z) in (1usize..6).prop_flat_map(|d| (point(d), point(d), point(d))),
    ) {
        let cm = CompositionMetric::new(b, phi);
        let xy = cm.distance(&x, &y).unwrap();
        prop_assert_eq!(xy.to_bits(), cm.distance(&y, &x).unwrap().to_bits());
        prop_assert_eq!(cm.distance(&x, &x).unwrap(), 0.0);
        if x != y {
            prop_assert!(xy > 0.0);
        }
        let xz = cm.distance(&x, &z).unwrap();
        let yz = cm.distance(&y, &z).unwrap();
        prop_assert!(xz <= xy + yz + 1e-9);
    }

    #[test]
    fn base_metrics_are_homogeneous(b in base(), (x, y) in (1usize..6).prop_flat_map(|d| (point(d), point(d))), c in 0.01..100.0f64) {
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let cy: Vec<f64> = y.iter().map(|v| c * v).collect();
        let d = b.distance(&x, &y).unwrap();
        prop_assert!(close(b.distance(&cx, &cy).unwrap(), c * d, 1e-12));
        prop_assert!(close(d, base_distance(b, &x, &y), 1e-12));
    }

    #[test]
    fn extensions_interpolate_and_are_lipschitz(
        s in sample(25), b in base(), phi in phi(),
        queries in prop::collection::vec(prop::collection::vec(-0.5..1.5f64, 4), 16),
        alpha in 0.0..=1.0f64,
    ) {
        let cm = CompositionMetric::new(b, phi);
        let m = ExtensionModel::fit(s.clone(), cm.clone(), ExtensionKind::Whitney).unwrap();
        let k = m.lipschitz();
        for (p, &v) in s.points().iter().zip(s.values()) {
            prop_assert!((m.whitney(p).unwrap() - v).abs() <= 1e-9);
            prop_assert!((m.mcshane(p).unwrap() - v).abs() <= 1e-9);
        }
        let qs: Vec<Vec<f64>> = queries.iter().map(|q| q[..s.dim()].to_vec()).collect();
        for x in &qs {
            let (w, mc) = m.whitney_mcshane(x).unwrap();
            let bl = m.blend(x, alpha).unwrap();
            prop_assert!(mc <= bl + 1e-9 && bl <= w + 1e-9);
        }
        for pair in qs.windows(2) {
            let d = cm.distance(&pair[0], &pair[1]).unwrap();
            for f in [
                |m: &ExtensionModel, x: &[f64]| m.whitney(x).unwrap(),
                |m: &ExtensionModel, x: &[f64]| m.mcshane(x).unwrap(),
                |m: &ExtensionModel, x: &[f64]| m.blend(x, 0.37).unwrap(),
            ] {
                let gap = (f(&m, &pair[0]) - f(&m, &pair[1])).abs();
                prop_assert!(gap <= k * d + 1e-9, "gap {} > {}", gap, k * d);
            }
        }
    }

    #[test]
    fn standard_index_error_is_bounded(s in sample(20), b in base(), phi in phi()) {
        let s = katetov_shift(&s);
        let cm = CompositionMetric::new(b, phi);
        let r = lipext::constants_report(&s, &cm).unwrap();
        prop_assume!(r.coherence.is_finite() && r.normalization.is_finite());
        let bound = (r.kq - 1.0) * r.bound;
        let m = lipext::standard_index_fit(s.clone(), cm).unwrap();
        for (p, &v) in s.points().iter().zip(s.values()) {
            prop_assert!((m.predict(p).unwrap() - v).abs() <= bound + 1e-9);
        }
    }

    #[test]
    fn kq_is_constant_along_rays(s in sample(15), b in base(), lambda in prop::collection::vec(0.0..5.0f64, 4)) {
        let s = katetov_shift(&s);
        let obj = KqObjective::new(&s, b, &PhiAtom::PHI_BASIS);
        let v = obj.evaluate(&lambda);
        prop_assume!(v.is_finite() && lambda.iter().any(|&l| l > 0.0));
        for c in [0.5, 2.0, 10.0] {
            let scaled: Vec<f64> = lambda.iter().map(|l| c * l).collect();
            prop_assert!(close(obj.evaluate(&scaled), v, 1e-9));
        }
    }

    #[test]
    fn model_json_round_trip_is_exact(s in sample(12), b in base(), phi in phi(), alpha in 0.0..=1.0f64) {
        let m = ExtensionModel::fit(s.clone(), CompositionMetric::new(b, phi), ExtensionKind::Blend { alpha }).unwrap();
        let back: ExtensionModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        prop_assert_eq!(&back, &m);
        for p in s.points() {
            let q: Vec<f64> = p.iter().map(|v| v + 0.1).collect();
            prop_assert_eq!(back.predict(&q).unwrap().to_bits(), m.predict(&q).unwrap().to_bits());
        }
    }

    #[test]
    fn scaling_is_idempotent(rows in prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 3), 2..20)) {
        let mut csv = String::from("id,a,b,c,index\n");
        for (i, r) in rows.iter().enumerate() {
            csv.push_str(&format!("r{i},{},{},{},{}\n", r[0], r[1], r[2], i));
        }
        let ds = Dataset::from_csv_reader(csv.as_bytes()).unwrap();
        let once = ds.minmax_scale(ScaleFit::AllRows).unwrap();
        let twice = once.minmax_scale(ScaleFit::AllRows).unwrap();
        for (a, b) in once.features.iter().zip(&twice.features) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((0.0..=1.0).contains(x));
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn mae_never_exceeds_rmse(pairs in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 1..40)) {
        let (pred, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = lipext::rmse(&pred, &truth).unwrap();
        prop_assert!(mae(&pred, &truth).unwrap() <= r + 1e-12);
        let sm = smape(&pred, &truth).unwrap();
        prop_assert!((0.0..=2.0).contains(&sm));
    }

    #[test]
    fn summary_stats_match_naive(xs in prop::collection::vec(0.0..50.0f64, 2..30)) {
        let (mean, median, sd) = summary_stats(&xs);
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!((mean - m).abs() <= 1e-12);
        prop_assert!((sd - var.sqrt()).abs() <= 1e-12);
        let below = xs.iter().filter(|&&x| x < median).count();
        let above = xs.iter().filter(|&&x| x > median).count();
        prop_assert!(below <= xs.len() / 2 && above <= xs.len() / 2);
    }
}

#[test]
fn splits_are_disjoint_and_covering() {
    for seed in 0..1000u64 {
        let n = 3 + (seed as usize % 120);
        let (tr, te) = split_indices(n, 0.7, seed).unwrap();
        assert_eq!(tr.len(), (n as f64 * 0.7).round() as usize);
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>(), "seed {seed}");
        assert_eq!(split_indices(n, 0.7, seed).unwrap(), (tr, te));
    }
}
