use deltaguide::eigensolve::{dense_op_norm, to_dense_matrix};
use deltaguide::error::Error;
use deltaguide::fem::{discretize_waveguide, edge_mean, region_mean, Potential};
use deltaguide::geometry::{unit_square_mesh, EdgeTag, GeometryParams, Region};
use deltaguide::identification::{build_maps, collapse, lemma_checks, limit_space, DefectSolver, IdMaps};
use deltaguide::sparse::{self, Csr};
use deltaguide::sweep::Pipeline;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(alpha: f64, beta: f64, eps: f64) -> GeometryParams {
    GeometryParams::symmetric(1.0, alpha, beta, eps)
}

fn pipeline(p: &GeometryParams, scale: f64) -> (Pipeline, IdMaps) {
    let pipe = Pipeline::at_scale(p, scale, &Potential::Zero).unwrap();
    let maps = build_maps(&pipe.mesh, &pipe.waveguide, &pipe.limit).unwrap();
    (pipe, maps)
}

fn max_abs(a: &Csr) -> f64 {
    a.iter().fold(0.0f64, |m, (v, _)| m.max(v.abs()))
}

fn max_diff(a: &Csr, b: &Csr) -> f64 {
    let d = a - b;
    max_abs(&d)
}

#[test]
fn exact_identities_hold() {
    for p in [params(1.0 / 3.0, 1.0 / 6.0, 0.1), params(1.0, 0.25, 0.05), params(0.25, 0.125, 0.03)] {
        let (pipe, maps) = pipeline(&p, 1.0);
        let j = &maps.lift;
        let mw = &pipe.waveguide.broken_mass;
        let m0 = &pipe.limit.pair.m;
        let jt: Csr = j.transpose_view().to_csr();
        // isometry
        let gram: Csr = &(&jt * mw) * j;
        assert!(max_diff(&gram, m0) < 1e-10 * max_abs(m0), "{:e}", max_diff(&gram, m0));
        // adjointness: M₀ J̃ = Jᵀ M_W, with J̃ = M₀⁻¹ · load
        let jt_mw: Csr = &jt * mw;
        assert!(max_diff(&maps.average_load, &jt_mw) < 1e-10 * max_abs(&jt_mw));
        // left inverse, column by column
        let n0 = maps.limit_dim();
        let mut worst: f64 = 0.0;
        for c in 0..n0 {
            let mut e = vec![0.0; n0];
            e[c] = 1.0;
            let back = maps.apply_average(&maps.apply_lift(&e));
            for (i, v) in back.iter().enumerate() {
                worst = worst.max((v - if i == c { 1.0 } else { 0.0 }).abs());
            }
        }
        assert!(worst < 1e-10, "{worst:e}");
    }
}

#[test]
fn constant_function_is_lifted_isometrically() {
    let p = params(1.0 / 3.0, 1.0 / 6.0, 0.1);
    let (pipe, maps) = pipeline(&p, 1.0);
    let g = p.validate().unwrap();
    let (eps, b) = (g.epsilon(), g.room_side);
    let n1 = pipe.limit.line_dim();
    let mut f = vec![1.0; maps.limit_dim()];
    f[n1] = b;
    let jf = maps.apply_lift(&f);
    let wg = &pipe.waveguide;
    for (k, v) in jf.iter().enumerate() {
        let expect = match wg.broken_region[k] {
            Region::Strip => eps.powf(-0.5),
            Region::Passage => 0.0,
            Region::Room => 1.0,
        };
        assert!((v - expect).abs() < 1e-12, "{:?}", wg.broken_region[k]);
    }
    let norm_w = sparse::bilinear(&wg.broken_mass, &jf, &jf);
    let norm_0 = sparse::bilinear(&pipe.limit.pair.m, &f, &f);
    assert!((norm_0 - (2.0 + b * b)).abs() < 1e-12);
    assert!((norm_w - norm_0).abs() < 1e-12);

    let ones = vec![1.0; wg.broken_dim()];
    let avg = maps.apply_average(&ones);
    for v in &avg[..n1] {
        assert!((v - eps.sqrt()).abs() < 1e-12);
    }
    assert!((avg[n1] - b).abs() < 1e-12);
}

#[test]
fn collapse_examples() {
    let (eps, d) = (0.1, 0.01);
    assert!((collapse(0.03, eps, d) - 0.027778).abs() < 1e-6);
    assert!((collapse(0.03, eps, d) - (0.06 - 0.01) / (2.0 * 0.09) * 0.1).abs() < 1e-15);
    assert_eq!(collapse(0.004, eps, d), 0.0);
    assert_eq!(collapse(0.06, eps, d), 0.06);
}

proptest! {
    #[test]
    fn collapse_properties(eps in 1e-4f64..0.5, frac in 0.0f64..0.5) {
        let d = frac * eps;
        let n = 2000;
        let h = 1.6 * eps / n as f64;
        for i in 0..=n {
            let x = -0.8 * eps + i as f64 * h;
            let y = collapse(x, eps, d);
            if x.abs() >= eps / 2.0 {
                prop_assert_eq!(y, x);
            } else if x.abs() <= d / 2.0 {
                prop_assert_eq!(y, 0.0);
            } else {
                prop_assert_eq!(y.signum(), x.signum());
                let dx = 1e-9 * eps;
                let lo = (x.abs() - dx).max(d / 2.0);
                let hi = (x.abs() + dx).min(eps / 2.0);
                let slope = (collapse(hi, eps, d) - collapse(lo, eps, d)) / (hi - lo);
                prop_assert!(slope >= 1.0 - 1e-6 && slope <= 2.0 + 1e-6, "slope {}", slope);
            }
        }
    }
}

#[test]
fn smooth_lift_is_constant_across_the_passage() {
    let p = params(1.0 / 3.0, 1.0 / 6.0, 0.05);
    let (pipe, maps) = pipeline(&p, 1.0);
    let mesh = &pipe.mesh;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut node_of_dof = vec![0; pipe.waveguide.dim()];
    node_of_dof.copy_from_slice(&pipe.waveguide.pair.nodes);
    for _ in 0..20 {
        let f: Vec<f64> = (0..maps.limit_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u = maps.apply_lift_h1(&f);
        let mut nodal = vec![0.0; mesh.n_nodes()];
        for (i, &n) in node_of_dof.iter().enumerate() {
            nodal[n] = u[i];
        }
        let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for e in mesh.elements_in(Region::Passage) {
            let t = mesh.elements[e];
            let [p0, p1, p2] = t.map(|n| mesh.nodes[n]);
            let [v0, v1, v2] = t.map(|n| nodal[n]);
            let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            let dx = ((v1 - v0) * (p2[1] - p0[1]) - (v2 - v0) * (p1[1] - p0[1])) / det;
            // |∂₁u| against the passage height scale of a vertical ramp
            assert!(dx.abs() * p.epsilon.powf(1.0 / 3.0) < 1e-10 * scale, "∂₁u = {dx}");
        }
    }
}

#[test]
fn lifts_agree_on_the_strip_away_from_the_junction() {
    let p = params(1.0 / 3.0, 1.0 / 6.0, 0.05);
    let (pipe, maps) = pipeline(&p, 1.0);
    let eps = p.epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs = &pipe.limit.xs;
    let n1 = pipe.limit.line_dim();
    let mut f = vec![0.0; maps.limit_dim()];
    for (i, &x) in xs.iter().enumerate().take(n1) {
        // support clear of |x| < ε/2 by one extra column on each side
        if x.abs() > 0.6 * eps {
            f[i] = rng.random_range(-1.0..1.0);
        }
    }
    let rough = maps.apply_lift(&f);
    let smooth = pipe.waveguide.inject(&maps.apply_lift_h1(&f));
    for k in 0..rough.len() {
        if pipe.waveguide.broken_region[k] == Region::Strip {
            assert!((rough[k] - smooth[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn range_of_the_lift_is_fixed_by_averaging() {
    let p = params(0.25, 0.25, 0.05);
    let (_, maps) = pipeline(&p, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let f: Vec<f64> = (0..maps.limit_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = maps.apply_lift(&f);
        let back = maps.apply_lift(&maps.apply_average(&w));
        for (a, b) in w.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn dual_defect_equals_primal() {
    for p in [params(1.0 / 3.0, 1.0 / 6.0, 0.1), params(1.0, 0.25, 0.05)] {
        let (pipe, maps) = pipeline(&p, 1.0);
        let solver = DefectSolver::new(&maps, &pipe.waveguide, &pipe.limit).unwrap();
        let (a, b) = (solver.resolvent_defect(), solver.dual_resolvent_defect());
        assert!(a.converged && b.converged);
        assert!((a.value - b.value).abs() < 1e-6 * a.value, "{} vs {}", a.value, b.value);
    }
}

#[test]
fn defect_decreases_under_halving() {
    let mut prev = f64::INFINITY;
    for eps in [0.1, 0.05, 0.025, 0.0125, 0.00625] {
        let (pipe, maps) = pipeline(&params(1.0 / 3.0, 1.0 / 6.0, eps), 1.0);
        let solver = DefectSolver::new(&maps, &pipe.waveguide, &pipe.limit).unwrap();
        let d = solver.resolvent_defect().value;
        assert!(d < prev, "ε={eps}: {d} after {prev}");
        prev = d;
    }
}

fn inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().cholesky().expect("SPD").inverse()
}

#[test]
fn defects_match_dense_linear_algebra() {
    let p = params(1.0 / 3.0, 1.0 / 6.0, 0.1);
    let (pipe, maps) = pipeline(&p, 2.0);
    let wg = &pipe.waveguide;
    let solver = DefectSolver::new(&maps, wg, &pipe.limit).unwrap();
    let (nb, nc) = (wg.broken_dim(), wg.dim());
    let mut e = DMatrix::<f64>::zeros(nb, nc);
    for (k, &i) in wg.broken_to_dof.iter().enumerate() {
        e[(k, i)] = 1.0;
    }
    let mw = to_dense_matrix(&wg.broken_mass);
    let kc = to_dense_matrix(&wg.pair.shifted(1.0));
    let m0 = to_dense_matrix(&pipe.limit.pair.m);
    let k0 = to_dense_matrix(&pipe.limit.pair.shifted(1.0));
    let j = to_dense_matrix(&maps.lift);
    let jt = inverse(&m0) * j.transpose() * &mw;
    let r_w = &e * inverse(&kc) * e.transpose() * &mw;
    let r_0 = inverse(&k0) * &m0;

    let primal = &r_w * &j - &j * &r_0;
    let oracle = dense_op_norm(&primal, &m0, &mw).unwrap();
    let est = solver.resolvent_defect().value;
    assert!((est - oracle).abs() < 1e-6 * oracle, "{est} vs {oracle}");

    let dual = &jt * &r_w - &r_0 * &jt;
    let oracle_dual = dense_op_norm(&dual, &mw, &m0).unwrap();
    assert!((solver.dual_resolvent_defect().value - oracle_dual).abs() < 1e-6 * oracle_dual);

    let qu = &e - &j * &jt * &e;
    let oracle_qu = dense_op_norm(&qu, &kc, &mw).unwrap();
    assert!((solver.quasi_unitarity_defect().value - oracle_qu).abs() < 1e-6 * oracle_qu);

    let j1 = e.clone() * to_dense_matrix(&maps.lift_h1);
    let oracle_lift = dense_op_norm(&(&j - j1), &k0, &mw).unwrap();
    assert!((solver.lift_defect().value - oracle_lift).abs() < 1e-6 * oracle_lift);
}

#[test]
fn waveguide_satisfies_the_abstract_resolvent_bound() {
    for eps in [0.1, 0.05] {
        let (pipe, maps) = pipeline(&params(1.0 / 3.0, 1.0 / 6.0, eps), 1.0);
        let solver = DefectSolver::new(&maps, &pipe.waveguide, &pipe.limit).unwrap();
        let parts = solver.coupling_defects();
        assert_eq!(parts.bwd_gap, 0.0);
        assert!(parts.adjoint_gap < 1e-12);
        let check = solver.resolvent_bound();
        assert!(check.pass, "{check:?}");
        assert!(check.lhs > 0.0);
    }
}

#[test]
fn quasi_unitarity_defect_tracks_the_power_law() {
    let ratios: Vec<f64> = [0.05, 0.025]
        .iter()
        .map(|&eps| {
            let (pipe, maps) = pipeline(&params(0.25, 0.25, eps), 1.0);
            let solver = DefectSolver::new(&maps, &pipe.waveguide, &pipe.limit).unwrap();
            solver.quasi_unitarity_defect().value / f64::powf(eps, 0.25)
        })
        .collect();
    let r = ratios[0] / ratios[1];
    assert!((1.0 / 3.0..3.0).contains(&r), "{ratios:?}");
}

#[test]
fn means_of_constants_coincide() {
    let (pipe, _) = pipeline(&params(1.0 / 3.0, 1.0 / 6.0, 0.1), 1.0);
    let mesh = &pipe.mesh;
    let u = vec![2.5; mesh.n_nodes()];
    for tag in [EdgeTag::DPlus, EdgeTag::DMinus, EdgeTag::D0] {
        assert!((edge_mean(mesh, tag, Some(0), &u) - 2.5).abs() < 1e-13);
    }
    for r in [Region::Room, Region::Passage, Region::Strip] {
        assert!((region_mean(mesh, mesh.elements_in(r), &u) - 2.5).abs() < 1e-13);
    }
}

#[test]
fn lemma_ratios_stay_bounded() {
    let rows: Vec<_> = [0.05, 0.025]
        .iter()
        .map(|&eps| {
            let (pipe, maps) = pipeline(&params(1.0 / 3.0, 1.0 / 6.0, eps), 1.0);
            let solver = DefectSolver::new(&maps, &pipe.waveguide, &pipe.limit).unwrap();
            lemma_checks(&pipe.mesh, &solver, 1.0 / 3.0, 0, 60, 3).unwrap()
        })
        .collect();
    for r in &rows {
        assert_eq!(r.samples, 60);
        for v in [r.room_mouth, r.junction_mouth, r.junction_centre, r.passage_mass, r.centre_average, r.lift_gap] {
            assert!(v.is_finite() && v >= 0.0);
        }
        assert!(r.centre_average <= 1.0 + 1e-9);
    }
    let grow = |a: f64, b: f64| b / a.max(1e-300);
    assert!(grow(rows[0].room_mouth, rows[1].room_mouth) < 3.0);
    assert!(grow(rows[0].junction_mouth, rows[1].junction_mouth) < 3.0);
    assert!(grow(rows[0].passage_mass, rows[1].passage_mass) < 3.0);
    assert!(grow(rows[0].lift_gap, rows[1].lift_gap) < 3.0);
}

#[test]
fn mismatched_spaces_are_rejected() {
    let square = unit_square_mesh(4);
    assert!(matches!(limit_space(&square, &[1.0], &Potential::Zero), Err(Error::Dimension(_))));
    let (pipe, _) = pipeline(&params(1.0 / 3.0, 1.0 / 6.0, 0.1), 2.0);
    let (other, _) = pipeline(&params(1.0 / 3.0, 1.0 / 6.0, 0.05), 2.0);
    assert!(build_maps(&pipe.mesh, &pipe.waveguide, &other.limit).is_err());
    assert!(limit_space(&pipe.mesh, &[1.0, 1.0], &Potential::Zero).is_err());
    let wg = discretize_waveguide(&square, &Potential::Zero).unwrap();
    assert!(build_maps(&square, &wg, &pipe.limit).is_err());
}
