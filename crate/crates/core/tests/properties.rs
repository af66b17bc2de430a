use std::f64::consts::PI;

use acgeo::ac_metric::{epsilon_emp, rescale};
use acgeo::asymptotics::blow_down;
use acgeo::cone_geometry::{fold, minimizing_length, unfold, Plane2, PolarPoint, WedgePoint};
use acgeo::discrete_curve::{energy, energy_gradient, geodesic_residual};
use acgeo::geodesic_flow::integrate_geodesic;
use acgeo::sweepout_minmax::reflection_i;
use acgeo::{DiscreteCurve, MetricSpec, OpeningAngle};
use proptest::prelude::*;

fn wavy_curve(n: usize, start: f64, amp: f64, segments: usize) -> DiscreteCurve {
    let pts: Vec<Vec<f64>> = (0..=segments)
        .map(|k| {
            let t = k as f64 / segments as f64;
            let mut x = vec![0.0; n];
            x[0] = start * (1.0 - t) + 1.0;
            x[1] = 2.0 + amp * (PI * t).sin();
            if n > 2 {
                x[2] = amp * (2.0 * PI * t).sin();
            }
            x
        })
        .collect();
    DiscreteCurve::from_points(&pts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fold_inverts_unfold(rho in 0.01f64..50.0, angle in -PI..PI, s in 0.05f64..0.95) {
        let alpha = OpeningAngle::from_sin(s).unwrap();
        let plane = Plane2::standard(3);
        let p = PolarPoint::new(rho, plane.point(1.0, angle)).unwrap();
        let w = unfold(&p, &plane, alpha).unwrap();
        let back = fold(&WedgePoint::new(w.rho, w.phi, alpha), &plane, alpha);
        for (a, b) in back.to_cartesian().iter().zip(p.to_cartesian()) {
            prop_assert!((a - b).abs() <= 1e-12 * rho.max(1.0));
        }
    }

    #[test]
    fn minimizing_length_symmetric_and_homogeneous(
        rho in 0.1f64..20.0,
        a in 0.0f64..PI,
        b in 0.0f64..PI,
        s in 0.05f64..0.95,
        lam in 0.1f64..10.0,
    ) {
        let alpha = OpeningAngle::from_sin(s).unwrap();
        let p = PolarPoint::new(rho, vec![a.cos(), a.sin()]).unwrap();
        let q = PolarPoint::new(rho, vec![b.cos(), -b.sin()]).unwrap();
        let l = minimizing_length(&p, &q, alpha).unwrap();
        prop_assert!((l - minimizing_length(&q, &p, alpha).unwrap()).abs() <= 1e-12 * l.max(1.0));
        let ps = PolarPoint::new(lam * rho, p.theta.clone()).unwrap();
        let qs = PolarPoint::new(lam * rho, q.theta.clone()).unwrap();
        let ls = minimizing_length(&ps, &qs, alpha).unwrap();
        prop_assert!((ls - lam * l).abs() <= 1e-12 * ls.max(1.0));
        prop_assert!(l <= 2.0 * rho * (1.0 + 1e-15));
    }

    #[test]
    fn reflection_preserves_energy_on_symmetric_metrics(amp in 0.0f64..1.5, start in 1.0f64..6.0) {
        let alpha = OpeningAngle::from_sin(0.4).unwrap();
        for spec in [MetricSpec::cone(3, alpha), MetricSpec::rotational_cap(3, alpha, 2.0), MetricSpec::power_bump(3, alpha, 0.4, 1.2)] {
            let c = wavy_curve(3, start, amp, 20);
            let r = c.map_vertices(reflection_i);
            let (e, er) = (energy(&c, &spec).unwrap(), energy(&r, &spec).unwrap());
            prop_assert!((e - er).abs() <= 1e-12 * e);
        }
    }

    #[test]
    fn geodesics_reverse(vx in -1.0f64..1.0, vy in -1.0f64..1.0, t_end in 0.5f64..4.0) {
        prop_assume!(vx.hypot(vy) > 0.1);
        let alpha = OpeningAngle::from_sin(0.5).unwrap();
        let spec = MetricSpec::rotational_cap(2, alpha, 1.5);
        let x0 = [2.0, 1.0];
        let fwd = integrate_geodesic(&spec, &x0, &[vx, vy], t_end, 1e-11).unwrap();
        let end = fwd.last();
        let back_v: Vec<f64> = end.v.iter().map(|v| -v).collect();
        let bwd = integrate_geodesic(&spec, &end.x, &back_v, t_end, 1e-11).unwrap();
        for (a, b) in bwd.last().x.iter().zip(&x0) {
            prop_assert!((a - b).abs() < 1e-6, "{:?}", bwd.last().x);
        }
    }

    #[test]
    fn energy_scales_under_blow_down(amp in 0.0f64..1.0, lam in 0.5f64..8.0) {
        // E_{λ⁻²D*g}(Γ/λ) = λ⁻² E_g(Γ)
        let alpha = OpeningAngle::from_sin(0.3).unwrap();
        let spec = MetricSpec::power_bump(2, alpha, 0.5, 1.5);
        let c = wavy_curve(2, 4.0, amp, 30);
        let small = blow_down(&c, lam).unwrap();
        let e = energy(&c, &spec).unwrap();
        let es = energy(&small, &rescale(&spec, lam).unwrap()).unwrap();
        prop_assert!((es * lam * lam - e).abs() <= 1e-9 * e);
    }
}

#[test]
fn blow_down_converges_to_the_cone() {
    let alpha = OpeningAngle::from_sin(0.4).unwrap();
    let spec = MetricSpec::power_bump(3, alpha, 0.5, 1.0);
    let eps: Vec<f64> = [1.0, 4.0, 16.0, 64.0]
        .iter()
        .map(|&lam| epsilon_emp(&rescale(&spec, lam).unwrap(), 1.0).unwrap())
        .collect();
    assert!(eps.windows(2).all(|w| w[1] < w[0]), "{eps:?}");
    assert!(eps[3] < 0.5 * eps[2], "{eps:?}");
}

#[test]
fn straight_generatrix_is_a_discrete_geodesic() {
    let alpha = OpeningAngle::from_sin(0.5).unwrap();
    let spec = MetricSpec::rotational_cap(2, alpha, 1.0);
    let c = DiscreteCurve::straight(&[10.0, 0.0], &[3.0, 0.0], 50).unwrap();
    let g = energy_gradient(&c, &spec).unwrap();
    assert!(g.iter().skip(1).step_by(2).all(|&v| v == 0.0));
    assert!(geodesic_residual(&c, &MetricSpec::cone(2, alpha)).unwrap() < 1e-10);
}
