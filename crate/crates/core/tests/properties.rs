use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use reslab::operator::unit_open;
use reslab::resolvent::eliminate_onto;
use reslab::stats::{ks_critical_1pct, ks_statistic};
use reslab::*;

/// `(H − z)^{-1}` from the eigendecomposition of `H`.
fn spectral_inverse(h: &DMatrix<f64>, z: Complex64) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(h.clone());
    let n = h.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| eig.eigenvectors[(i, k)] * eig.eigenvectors[(j, k)] / (eig.eigenvalues[k] - z))
            .sum()
    })
}

fn topology() -> impl Strategy<Value = TopologySpec> {
    prop_oneof![
        (2usize..40).prop_map(TopologySpec::path),
        (2usize..7, 2usize..7).prop_map(|(a, b)| TopologySpec::boxed(&[a, b])),
        (2usize..4, 1usize..4).prop_map(|(k, d)| TopologySpec::tree(k, d)),
    ]
}

fn distribution() -> impl Strategy<Value = Distribution> {
    prop_oneof![
        (-2.0f64..0.0, 0.1f64..2.0).prop_map(|(a, w)| Distribution::uniform(a, a + w)),
        (-1.0f64..1.0, 0.1f64..2.0).prop_map(|(m, s)| Distribution::gaussian(m, s)),
        (-1.0f64..1.0, 0.1f64..2.0).prop_map(|(m, s)| Distribution::cauchy(m, s)),
    ]
}

fn case() -> impl Strategy<Value = (OperatorModel, u64, ComplexEnergy)> {
    (topology(), distribution(), 0.0f64..3.0, any::<u64>(), -3.0f64..3.0, -4.0f64..0.0).prop_map(
        |(t, d, lambda, seed, e, log_eta)| {
            let g = Graph::build(&t).unwrap();
            let m = OperatorModel::new(g, d, lambda, seed).unwrap();
            (m, seed % 97, ComplexEnergy::new(e, 10f64.powf(log_eta)).unwrap())
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn green_function_against_spectral_oracle((m, r, z) in case()) {
        let s = m.sample_potential(r);
        let h = m.hamiltonian(&s).unwrap();
        let inv = spectral_inverse(&h, z.z());
        let d = DenseResolvent::for_model(&m, &s, z).unwrap();
        let n = m.vertex_count();
        for x in [0, n / 2, n - 1] {
            let col = d.column(x).unwrap();
            let scale = inv.column(x).norm();
            for y in 0..n {
                prop_assert!((col.values[y] - inv[(y, x)]).norm() <= 1e-9 * scale);
                // Symmetry of the resolvent kernel.
                prop_assert!((inv[(x, y)] - inv[(y, x)]).norm() <= 1e-12 * scale);
            }
            // Herglotz and the sum rule.
            let gxx = col.diagonal();
            prop_assert!(gxx.im > 0.0);
            let rule = gxx.im / z.eta;
            prop_assert!((col.norm_sqr() - rule).abs() <= 1e-8 * rule);
        }
    }

    #[test]
    fn self_energy_ignores_local_potential((m, r, z) in case(), v in -5.0f64..5.0) {
        let s = m.sample_potential(r);
        let x = m.vertex_count() / 2;
        let a = DenseResolvent::for_model(&m, &s, z).unwrap().self_energy(x).unwrap();
        let s2 = s.conditional_resample(x, v).unwrap();
        let b = DenseResolvent::for_model(&m, &s2, z).unwrap().self_energy(x).unwrap();
        prop_assert!((a - b).norm() <= 1e-9 * a.norm().max(1.0));
        // Rank-one form: G(x,x) = 1/(V(x) − Σ(x)).
        let inv = spectral_inverse(&m.hamiltonian(&s2).unwrap(), z.z());
        let g = 1.0 / (s2.values[x] - b);
        prop_assert!((g - inv[(x, x)]).norm() <= 1e-9 * g.norm());
    }

    #[test]
    fn two_site_schur_against_block_inverse((m, r, z) in case()) {
        let n = m.vertex_count();
        let (x, y) = (0, n - 1);
        let s = m.sample_potential(r);
        let h = m.hamiltonian(&s).unwrap();
        let inv = spectral_inverse(&h, z.z());
        let d = DenseResolvent::for_model(&m, &s, z).unwrap().schur_two_site(x, y).unwrap();
        let block = d.green_block();
        let want = [[inv[(x, x)], inv[(x, y)]], [inv[(y, x)], inv[(y, y)]]];
        let scale = inv[(x, x)].norm().max(inv[(y, y)].norm());
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((block[i][j] - want[i][j]).norm() <= 1e-8 * scale);
            }
        }
        // Σ(x) through σ, τ and the y-site.
        let sigma = s.values[x] - 1.0 / inv[(x, x)];
        prop_assert!((d.reduced_self_energy() - sigma).norm() <= 1e-8 * sigma.norm().max(1.0));
        // G(y,x)/G(y,y) through the x-site.
        let ratio = inv[(y, x)] / inv[(y, y)];
        prop_assert!((d.ratio_from_y() - ratio).norm() <= 1e-8 * ratio.norm().max(1.0));
        // The same block from the generic elimination routine.
        let reduced = eliminate_onto(&h, &[x, y], z).unwrap();
        prop_assert!((reduced[(0, 1)] + d.tau_xy).norm() <= 1e-8 * d.tau_xy.norm().max(1.0));
    }

    #[test]
    fn tree_recursion_matches_dense(k in 2usize..4, depth in 2usize..5, lambda in 0.0f64..3.0, seed in any::<u64>(), e in -3.0f64..3.0) {
        let g = Graph::build(&TopologySpec::tree(k, depth)).unwrap();
        let m = OperatorModel::new(g, Distribution::uniform(-1.0, 1.0), lambda, seed).unwrap();
        let s = m.sample_potential(0);
        let z = ComplexEnergy::new(e, 1e-2).unwrap();
        let t = TreeResolvent::new(&m, &s, z, TreeBoundary::Open).unwrap();
        let inv = spectral_inverse(&m.hamiltonian(&s).unwrap(), z.z());
        let n = m.vertex_count();
        let scale = inv[(0, 0)].norm();
        for x in [0, 1, n / 2, n - 1] {
            prop_assert!((t.green_diag(x).unwrap() - inv[(x, x)]).norm() <= 1e-8 * inv[(x, x)].norm());
            let ratio = inv[(0, x)] / inv[(0, 0)];
            prop_assert!((t.g_ratio(x).unwrap() - ratio).norm() <= 1e-8 * ratio.norm().max(1e-300) + 1e-14 * scale);
        }
    }

    #[test]
    fn spheres_partition_vertices(t in topology()) {
        let g = Graph::build(&t).unwrap();
        let mut seen = vec![false; g.vertex_count()];
        for r in 0..=g.radius() {
            for v in g.origin_sphere(r) {
                prop_assert!(!seen[v]);
                prop_assert_eq!(g.distance(g.origin(), v), r);
                seen[v] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn distance_is_a_metric(t in topology(), a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>(), c in any::<prop::sample::Index>()) {
        let g = Graph::build(&t).unwrap();
        let n = g.vertex_count();
        let (x, y, w) = (a.index(n), b.index(n), c.index(n));
        prop_assert_eq!(g.distance(x, y), g.distance(y, x));
        prop_assert!(g.distance(x, y) <= g.distance(x, w) + g.distance(w, y));
        prop_assert_eq!(g.distance(x, x), 0);
    }

    #[test]
    fn density_sup_dominates_grid(d in distribution()) {
        let sup = d.density_sup().unwrap();
        let (lo, hi) = (d.quantile(1e-4), d.quantile(1.0 - 1e-4));
        let grid_max = (0..2001)
            .map(|i| d.density(lo + (hi - lo) * i as f64 / 2000.0).unwrap())
            .fold(0.0, f64::max);
        prop_assert!(grid_max <= sup * (1.0 + 1e-12));
        prop_assert!(grid_max >= 0.99 * sup);
    }
}

#[test]
fn sampler_passes_ks() {
    for d in [
        Distribution::uniform(-1.0, 3.0),
        Distribution::gaussian(0.5, 2.0),
        Distribution::cauchy(-1.0, 0.3),
    ] {
        let g = Graph::build(&TopologySpec::path(5000)).unwrap();
        let m = OperatorModel::new(g, d, 1.0, 99).unwrap();
        let s = m.sample_potential(0);
        let ks = ks_statistic(&s.values, |x| d.cdf(x));
        assert!(ks < ks_critical_1pct(s.len()), "{d:?}: KS = {ks}");
    }
}

#[test]
fn bernoulli_frequency() {
    let d = Distribution::Bernoulli { p: 0.3, v0: -1.0, v1: 1.0 };
    let g = Graph::build(&TopologySpec::path(20000)).unwrap();
    let m = OperatorModel::new(g, d, 1.0, 4).unwrap();
    let ones = m.sample_potential(0).values.iter().filter(|&&v| v == 1.0).count() as f64 / 20000.0;
    assert!((ones - 0.3).abs() < 4.0 * (0.3f64 * 0.7 / 20000.0).sqrt());
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let g = Graph::build(&TopologySpec::boxed(&[6, 6])).unwrap();
    let m = OperatorModel::new(g, Distribution::uniform(0.0, 1.0), 1.0, 17).unwrap();
    assert_eq!(m.sample_potential(3).values, m.sample_potential(3).values);
    assert_ne!(m.sample_potential(3).values, m.sample_potential(4).values);
    assert_ne!(m.sample_potential(3).values, m.with_seed(18).sample_potential(3).values);
    assert!(unit_open(0) > 0.0 && unit_open(u64::MAX) < 1.0);
}
