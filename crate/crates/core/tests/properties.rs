use proptest::prelude::*;

use readpp_core::data::io::{parse_scanpaths, write_scanpaths, Delimiter};
use readpp_core::data::{filter_scanpath, AnnotatedFixation, Assignment, Fixation, Scanpath};
use readpp_core::eval::{bootstrap, delta_loglik, ks_exponential, PerFixation};
use readpp_core::events::Events;
use readpp_core::fit::{kfold, split};
use readpp_core::params::{saccade_from_doc, saccade_to_doc, ParamDoc};
use readpp_core::saccade::{scanpath_loglik, Link, MeanFn, SaccadeParams, SaccadeSpec};
use readpp_core::Rect;

fn scanpath() -> impl Strategy<Value = Scanpath> {
    prop::collection::vec((0.01f64..0.5, 0.05f64..0.4, 0.0f64..800.0, 0.0f64..600.0), 1..25).prop_map(|steps| {
        let mut t = 0.0;
        let fixations = steps
            .into_iter()
            .map(|(gap, d, x, y)| {
                let f = Fixation::new(t + gap, x, y, d);
                t = f.end();
                f
            })
            .collect();
        Scanpath::new("r", "t", fixations).unwrap()
    })
}

fn assignment() -> impl Strategy<Value = Assignment> {
    prop_oneof![
        Just(Assignment::Outside),
        (0usize..5, any::<bool>()).prop_map(|(w, ws)| Assignment::Box {
            word_index: w,
            char_index: 0,
            is_whitespace: ws,
        }),
    ]
}

fn per_fixation(values: Vec<f64>) -> PerFixation {
    PerFixation {
        ids: (0..values.len()).map(|i| ("r/t".to_string(), i)).collect(),
        values,
    }
}

fn hawkes_params() -> impl Strategy<Value = (SaccadeSpec, SaccadeParams<f64>)> {
    (
        1e-7f64..1e-5,
        100.0f64..5000.0,
        prop::collection::vec(-2.0f64..3.0, 4),
        -50.0f64..50.0,
        0.8f64..1.2,
    )
        .prop_map(|(nu, var, w, b, a)| {
            let spec = SaccadeSpec::hawkes(MeanFn::Affine);
            let mut p = SaccadeParams::new(2, nu, var, Link::Softplus);
            p.excitation = vec![w[0], w[1]];
            p.decay = vec![w[2], w[3]];
            p.offset = [b, -b / 2.0];
            p.transform = [[a, 0.01], [-0.02, 2.0 - a]];
            (spec, p)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delta_is_antisymmetric(a in prop::collection::vec(-20.0f64..5.0, 1..50), shift in -3.0f64..3.0) {
        let b: Vec<f64> = a.iter().map(|v| v * 0.5 + shift).collect();
        let (pa, pb) = (per_fixation(a), per_fixation(b));
        let ab = delta_loglik(&pa, &pb).unwrap();
        let ba = delta_loglik(&pb, &pa).unwrap();
        prop_assert!(ab.iter().zip(&ba).all(|(x, y)| *x == -*y));
    }

    #[test]
    fn bootstrap_is_affine_equivariant(
        v in prop::collection::vec(-5.0f64..5.0, 2..60),
        k in 0.1f64..10.0,
        c in -5.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let base = bootstrap(&v, 200, seed, None).unwrap();
        let moved: Vec<f64> = v.iter().map(|x| k * x + c).collect();
        let ci = bootstrap(&moved, 200, seed, None).unwrap();
        let tol = 1e-9 * (1.0 + k * 5.0 + c.abs());
        prop_assert!((ci.mean - (k * base.mean + c)).abs() < tol);
        prop_assert!((ci.lower - (k * base.lower + c)).abs() < tol);
        prop_assert!((ci.upper - (k * base.upper + c)).abs() < tol);
        prop_assert!(ci.lower <= ci.mean && ci.mean <= ci.upper);
    }

    #[test]
    fn block_bootstrap_with_singleton_groups_matches_plain(
        v in prop::collection::vec(-5.0f64..5.0, 1..40),
        seed in any::<u64>(),
    ) {
        let groups: Vec<usize> = (0..v.len()).collect();
        let plain = bootstrap(&v, 100, seed, None).unwrap();
        let blocked = bootstrap(&v, 100, seed, Some(&groups)).unwrap();
        prop_assert!((plain.lower - blocked.lower).abs() < 1e-12);
        prop_assert!((plain.upper - blocked.upper).abs() < 1e-12);
    }

    #[test]
    fn ks_stays_in_range(gaps in prop::collection::vec(0.0f64..10.0, 1..100)) {
        let ks = ks_exponential(&gaps).unwrap();
        prop_assert!((0.0..=1.0).contains(&ks.statistic));
        prop_assert!((0.0..=1.0).contains(&ks.p_value));
        prop_assert_eq!(ks.n, gaps.len());
    }

    #[test]
    fn filtering_is_idempotent(sp in scanpath(), seed in prop::collection::vec(assignment(), 25)) {
        let annotated: Vec<AnnotatedFixation> = sp
            .fixations
            .iter()
            .enumerate()
            .map(|(index, &fixation)| AnnotatedFixation { index, fixation, assignment: seed[index] })
            .collect();
        let once = filter_scanpath("r", "t", &annotated);
        let kept: Vec<AnnotatedFixation> =
            annotated.iter().filter(|a| a.assignment.word().is_some()).copied().collect();
        let twice = filter_scanpath("r", "t", &kept);
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.validate().is_ok());
    }

    #[test]
    fn scanpaths_round_trip(sp in scanpath(), tab in any::<bool>()) {
        let delimiter = if tab { Delimiter::Tab } else { Delimiter::Comma };
        let mut buf = Vec::new();
        write_scanpaths(&mut buf, std::slice::from_ref(&sp), delimiter).unwrap();
        let back = parse_scanpaths(std::str::from_utf8(&buf).unwrap(), "mem", delimiter).unwrap();
        prop_assert_eq!(back, vec![sp]);
    }

    #[test]
    fn parameter_documents_round_trip((spec, p) in hawkes_params()) {
        let columns = vec!["intercept".to_string(), "reader:a".to_string()];
        let doc = saccade_to_doc(&spec, &columns, &p);
        let parsed = ParamDoc::parse(&doc.to_text(), "mem").unwrap();
        let (spec2, columns2, p2) = saccade_from_doc(&parsed).unwrap();
        prop_assert_eq!(spec2, spec);
        prop_assert_eq!(columns2, columns);
        prop_assert_eq!(p2, p);
    }

    #[test]
    fn splits_partition(n in 0usize..200, a in 0.0f64..1.0, b in 0.0f64..1.0, seed in any::<u64>()) {
        let (a, b) = (a.min(1.0 - 1e-12), b * (1.0 - a));
        let (tr, va, te) = split(n, [a, b, 1.0 - a - b], seed).unwrap();
        let mut all: Vec<usize> = tr.iter().chain(&va).chain(&te).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split(n, [a, b, 1.0 - a - b], seed).unwrap(), (tr, va, te));
    }

    #[test]
    fn folds_partition(n in 1usize..100, k in 1usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = kfold(n, k, seed).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn zero_excitation_hawkes_is_poisson(sp in scanpath(), nu in 1e-7f64..1e-5) {
        let omega = Rect::screen(800.0, 600.0);
        let mut rows = Events::<f64>::new(&sp, None).unwrap();
        rows.rows = vec![vec![1.0, 0.0]; sp.len()];
        let mut hawkes = SaccadeParams::new(2, nu, 400.0, Link::Relu);
        hawkes.excitation = vec![0.0, 0.0];
        let poisson = SaccadeParams::new(2, nu, 400.0, Link::Relu);
        let a = scanpath_loglik(&rows, &SaccadeSpec::hawkes(MeanFn::Baseline).with_link(Link::Relu), &hawkes, &omega)
            .unwrap();
        let b = scanpath_loglik(&rows, &SaccadeSpec::poisson(), &poisson, &omega).unwrap();
        for (x, y) in a.per_event.iter().zip(&b.per_event) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn single_precision_tracks_double((spec, p) in hawkes_params(), sp in scanpath()) {
        let omega = Rect::screen(800.0, 600.0);
        let mut e64 = Events::<f64>::new(&sp, None).unwrap();
        e64.rows = vec![vec![1.0, 1.0]; sp.len()];
        let mut e32 = Events::<f32>::new(&sp, None).unwrap();
        e32.rows = vec![vec![1.0, 1.0]; sp.len()];
        let l64 = scanpath_loglik(&e64, &spec, &p, &omega).unwrap();
        let l32 = scanpath_loglik(&e32, &spec, &p.cast::<f32>(), &readpp_core::geometry::Rect::<f32>::screen(800.0, 600.0)).unwrap();
        for (x, y) in l64.per_event.iter().zip(&l32.per_event) {
            prop_assert!((x - *y as f64).abs() <= 1e-3 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }
}
