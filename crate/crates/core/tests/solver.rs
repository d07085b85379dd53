use tvam_core::geometry::{make_disk, make_gyroid, Label};
use tvam_core::osmo::{solve_osmo, solve_osmo_batch, OsmoLane, OsmoOptions};
use tvam_core::penalty::{objective, Lane};
use tvam_core::solver::{solve_batch, Init, StepSize};
use tvam_core::{
    solve, solve_volume, Error, PenaltyConfig, ProjectionGeometry, Projector, SolveOptions, TargetGeometry,
};

fn projector(nx: usize, na: usize) -> Projector {
    Projector::new(ProjectionGeometry::new(nx, na, ProjectionGeometry::default_bins(nx), 0.0).unwrap()).unwrap()
}

fn opts(iters: usize) -> SolveOptions {
    SolveOptions::with_iters(iters)
}

fn all_families() -> [PenaltyConfig; 4] {
    [
        PenaltyConfig::l2n(0.7, 0.9).unwrap(),
        PenaltyConfig::osp(0.7, 0.9).unwrap(),
        PenaltyConfig::ospw(0.7, 0.9, 0.1).unwrap(),
        PenaltyConfig::ospw(0.7, 0.9, 0.0).unwrap(),
    ]
}

#[test]
fn every_iterate_is_nonnegative() {
    let g = make_disk(24, 0.5).unwrap();
    let p = projector(24, 30);
    for cfg in all_families() {
        for k in 0..=12 {
            let r = solve(&g, &p, &cfg, &opts(k)).unwrap();
            assert!(r.plan.values.iter().all(|&v| v >= 0.0), "{cfg:?} iteration {k}");
            assert_eq!(r.iters_run, k);
        }
    }
}

#[test]
fn objective_decreases_between_checkpoints() {
    let g = make_disk(32, 0.5).unwrap();
    let p = projector(32, 45);
    for cfg in all_families() {
        let r = solve(&g, &p, &cfg, &opts(1000)).unwrap();
        let at = |k: usize| r.history.iter().find(|h| h.0 == k).unwrap().1;
        assert!(at(100) <= at(0) && at(1000) <= at(100), "{cfg:?}: {} {} {}", at(0), at(100), at(1000));
        assert!(r.history.iter().all(|h| h.1.is_finite()));
        assert_eq!(r.history.len(), 101);
        // The recorded final objective is that of the returned plan.
        let f = objective(&r.plan, &g, &p, &cfg).unwrap();
        assert!((f - at(1000)).abs() <= 1e-6 * f.max(1e-12) + 1e-9);
    }
}

#[test]
fn initializations_reach_the_same_objective() {
    let g = make_disk(32, 0.5).unwrap();
    let p = projector(32, 45);
    for cfg in [PenaltyConfig::l2n(0.7, 0.9).unwrap(), PenaltyConfig::osp(0.7, 0.9).unwrap()] {
        let zeros = solve(&g, &p, &cfg, &opts(2000)).unwrap();
        let fbp = solve(&g, &p, &cfg, &SolveOptions { init: Init::ClippedFbp, ..opts(2000) }).unwrap();
        let (a, b) = (zeros.history.last().unwrap().1, fbp.history.last().unwrap().1);
        // Both runs may reach a zero optimum; compare relative to the start.
        let start = zeros.history[0].1;
        assert!(
            (a - b).abs() <= 0.01 * a.max(b) || (a - b).abs() <= 1e-6 * start,
            "{cfg:?}: zeros {a} vs fbp {b}"
        );
        assert_ne!(zeros.history[0].1, fbp.history[0].1);
    }
}

#[test]
fn dose_is_the_back_projection_of_the_plan() {
    let g = make_disk(24, 0.5).unwrap();
    let p = projector(24, 30);
    let r = solve(&g, &p, &PenaltyConfig::ospw(0.7, 0.9, 0.0).unwrap(), &opts(50)).unwrap();
    assert_eq!(r.dose, p.backward(&r.plan).unwrap());
}

#[test]
fn solves_are_deterministic_and_slice_independent() {
    let vol = make_gyroid(32, 6, 2, 0.3).unwrap();
    let p = projector(32, 24);
    let cfg = PenaltyConfig::ospw(0.7, 0.9, 0.0).unwrap();
    let a = solve_volume(&vol, &p, &cfg, &opts(60)).unwrap();
    let b = solve_volume(&vol, &p, &cfg, &opts(60)).unwrap();
    assert_eq!(a, b);
    for iz in 0..vol.nz() {
        let one = solve(&vol.slice(iz), &p, &cfg, &opts(60)).unwrap();
        assert_eq!(one.plan.values, a.plan.slice(iz));
        assert_eq!(one.dose.values, a.dose.slice(iz));
    }
    let total: f64 = (0..vol.nz())
        .map(|iz| solve(&vol.slice(iz), &p, &cfg, &opts(60)).unwrap().history.last().unwrap().1)
        .sum();
    assert!((a.history.last().unwrap().1 - total).abs() <= 1e-12 * total);
}

#[test]
fn batches_match_single_solves() {
    let g = make_disk(24, 0.5).unwrap();
    let g2 = make_disk(24, 0.3).unwrap();
    let p = projector(24, 30);
    let cfgs = [
        PenaltyConfig::osp(0.5, 0.9).unwrap(),
        PenaltyConfig::ospw(0.7, 0.9, 0.0).unwrap(),
        PenaltyConfig::l2n(0.2, 0.4).unwrap(),
    ];
    let lanes: Vec<Lane<'_>> = (0..19)
        .map(|i| Lane {
            labels: if i % 2 == 0 { g.labels() } else { g2.labels() },
            cfg: cfgs[i % 3],
        })
        .collect();
    let batch = solve_batch(&p, &lanes, &opts(25)).unwrap();
    for (i, r) in batch.iter().enumerate() {
        let geom = if i % 2 == 0 { &g } else { &g2 };
        let single = solve(geom, &p, &cfgs[i % 3], &opts(25)).unwrap();
        assert_eq!(r.as_ref().unwrap(), &single, "lane {i}");
    }
}

#[test]
fn invalid_inputs_fail_before_solving() {
    let g = make_disk(24, 0.5).unwrap();
    let p = projector(24, 30);
    let cfg = PenaltyConfig::osp(0.7, 0.9).unwrap();
    assert!(matches!(solve(&g, &projector(16, 10), &cfg, &opts(5)), Err(Error::Shape(_))));
    let bad_step = SolveOptions { step: StepSize::Fixed(-1.0), ..opts(5) };
    assert!(matches!(solve(&g, &p, &cfg, &bad_step), Err(Error::Parameter(_))));
    let vol = make_gyroid(32, 2, 1, 0.3).unwrap();
    assert!(matches!(solve(&vol, &projector(32, 10), &cfg, &opts(1)), Err(Error::Shape(_))));

    let labels: Vec<Label> = g.labels().iter().map(|&l| if l == Label::Out { Label::In } else { l }).collect();
    assert!(matches!(TargetGeometry::from_labels(24, 1, labels), Err(Error::DegenerateSlices { .. })));
}

#[test]
fn oversized_steps_report_divergence() {
    let g = make_disk(24, 0.5).unwrap();
    let p = projector(24, 30);
    let huge = SolveOptions { step: StepSize::Fixed(1e6), ..opts(400) };
    match solve(&g, &p, &PenaltyConfig::l2n(0.7, 0.9).unwrap(), &huge) {
        Err(Error::Divergence { iteration }) => assert!(iteration > 0),
        other => panic!("expected divergence, got {:?}", other.map(|r| r.history.last().cloned())),
    }
}

#[test]
fn osmo_outputs_are_normalized_and_floored() {
    let g = make_disk(32, 0.5).unwrap();
    let p = projector(32, 45);
    for mpv in [0.0, 0.02] {
        let mut o = OsmoOptions::defaults(40);
        o.min_projection_value = mpv;
        let r = solve_osmo(&g, &p, &o).unwrap();
        let max = r.dose.values.iter().cloned().fold(f32::MIN, f32::max);
        assert!((max - 1.0).abs() < 1e-6);
        assert!(r.plan.values.iter().all(|&v| v >= mpv as f32));
        assert_eq!(r, solve_osmo(&g, &p, &o).unwrap());
    }
}

#[test]
fn osmo_volume_normalizes_each_slice() {
    let vol = make_gyroid(32, 4, 1, 0.3).unwrap();
    let p = projector(32, 24);
    let o = OsmoOptions::defaults(10);
    let r = solve_osmo(&vol, &p, &o).unwrap();
    for iz in 0..4 {
        let max = r.dose.slice(iz).iter().cloned().fold(f32::MIN, f32::max);
        assert!((max - 1.0).abs() < 1e-6);
        let one = solve_osmo(&vol.slice(iz), &p, &o).unwrap();
        assert_eq!(one.plan.values, r.plan.slice(iz));
    }
}

#[test]
fn osmo_collapse_is_reported_per_lane() {
    let g = make_disk(32, 0.5).unwrap();
    let p = projector(32, 45);
    let lanes = [
        OsmoLane { labels: g.labels(), tau_lower: 0.04, tau_upper: 0.08 },
        OsmoLane { labels: g.labels(), tau_lower: 0.85, tau_upper: 0.90 },
    ];
    let r = solve_osmo_batch(&p, &lanes, &OsmoOptions::defaults(300)).unwrap();
    assert!(matches!(r[0], Err(Error::OsmoCollapse { .. })));
    assert!(r[1].is_ok());
}

#[test]
fn gyroid_volume_dose_is_bimodal() {
    let vol = make_gyroid(64, 4, 1, 0.3).unwrap();
    let p = projector(64, 90);
    let r = solve_volume(&vol, &p, &PenaltyConfig::ospw(0.7, 0.9, 0.0).unwrap(), &opts(1500)).unwrap();
    let h = tvam_core::metrics::histogram(&r.dose, &vol, 100).unwrap();
    let mode = |c: &[usize]| (0..c.len()).max_by_key(|&b| c[b]).unwrap();
    let centre = |b: usize| h.edge(b) + 0.5 * h.bin_width();
    let (mi, mo) = (centre(mode(&h.in_counts)), centre(mode(&h.out_counts)));
    assert!((mi - 0.9).abs() < 0.02, "in-part mode at {mi}");
    assert!(mo < 0.7, "out-of-part mode at {mo}");
}
