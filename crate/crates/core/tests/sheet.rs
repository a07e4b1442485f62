use proptest::prelude::*;
use sheetstop_core::{extend_sheet, generate_sheet, GridSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn extension_keeps_every_existing_value(seed in any::<u64>(), sub in 0u64..1000, nt in 1usize..12, nx in 1usize..12, extra in 1usize..12) {
        let spec = GridSpec::new(nt as f64 * 0.25, nx as f64 * 0.5, nt, nx).unwrap();
        let g = generate_sheet(spec, seed, sub).unwrap();
        let e = extend_sheet(&g, (nt + extra) as f64 * 0.25).unwrap();
        for i in 0..=nt {
            prop_assert_eq!(g.row(i), e.row(i));
        }
        let direct = generate_sheet(GridSpec::new((nt + extra) as f64 * 0.25, nx as f64 * 0.5, nt + extra, nx).unwrap(), seed, sub).unwrap();
        prop_assert_eq!(&e, &direct);
    }

    #[test]
    fn growth_order_does_not_matter(seed in any::<u64>(), nt in 1usize..8, nx in 1usize..8, dt in 1usize..6, dx in 1usize..6) {
        let spec = GridSpec::new(nt as f64, nx as f64, nt, nx).unwrap();
        let mut a = generate_sheet(spec, seed, 3).unwrap();
        let mut b = a.clone();
        a.grow_t(dt);
        a.grow_x(dx);
        b.grow_x(dx);
        b.grow_t(dt);
        for i in 0..=nt + dt {
            for j in 0..=nx + dx {
                prop_assert_eq!(a.value(i, j).to_bits(), b.value(i, j).to_bits());
            }
        }
    }

    #[test]
    fn axes_are_pinned_at_zero(seed in any::<u64>(), nt in 1usize..10, nx in 1usize..10) {
        let g = generate_sheet(GridSpec::new(1.0, 1.0, nt, nx).unwrap(), seed, 0).unwrap();
        for i in 0..=nt {
            prop_assert_eq!(g.value(i, 0), 0.0);
        }
        prop_assert!(g.row(0).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn covariance_is_product_of_minima() {
    // Cov(B(s,a), B(t,x)) = min(s,t) min(a,x); compare on a 4x4 lattice.
    let n = 40_000u64;
    let pts = [(1usize, 3usize), (2, 2), (4, 4), (3, 1)];
    let mut acc = [[0.0f64; 4]; 4];
    for r in 0..n {
        let g = generate_sheet(GridSpec::new(1.0, 1.0, 4, 4).unwrap(), 5, r).unwrap();
        let v: Vec<f64> = pts.iter().map(|&(i, j)| g.value(i, j)).collect();
        for p in 0..4 {
            for q in 0..4 {
                acc[p][q] += v[p] * v[q];
            }
        }
    }
    for p in 0..4 {
        for q in 0..4 {
            let (s, a) = (pts[p].0 as f64 / 4.0, pts[p].1 as f64 / 4.0);
            let (t, x) = (pts[q].0 as f64 / 4.0, pts[q].1 as f64 / 4.0);
            let truth = s.min(t) * a.min(x);
            let est = acc[p][q] / n as f64;
            // 4 sd of a product of two normals with variance at most 1
            assert!(
                (est - truth).abs() < 4.0 * (2.0 / n as f64).sqrt(),
                "{p}{q}: {est} vs {truth}"
            );
        }
    }
}

#[test]
fn increments_are_independent_across_cells() {
    let g = generate_sheet(GridSpec::new(1.0, 1.0, 300, 300).unwrap(), 17, 0).unwrap();
    let m = 300 * 300;
    let var = 1.0 / m as f64;
    let (mut s2, mut lag_t, mut lag_x) = (0.0, 0.0, 0.0);
    for i in 0..299 {
        for j in 0..299 {
            let c = g.cell_increment(i, j);
            s2 += c * c;
            lag_t += c * g.cell_increment(i + 1, j);
            lag_x += c * g.cell_increment(i, j + 1);
        }
    }
    let k = 299.0 * 299.0;
    assert!((s2 / k / var - 1.0).abs() < 0.02);
    assert!((lag_t / k / var).abs() < 0.02);
    assert!((lag_x / k / var).abs() < 0.02);
}
