use std::f64::consts::PI;

use cmfbound::special_fn::{alpha, eigfun_u, gamma_star, in_omega, u_real};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn omega_point() -> impl Strategy<Value = C64> {
    (0.01f64..20.0, -20.0f64..20.0)
        .prop_map(|(re, im)| C64::new(re, im))
        .prop_filter("inside the slit half-plane", |z| in_omega(*z))
}

proptest! {
    #[test]
    fn alpha_inverts_secant(z in omega_point()) {
        let a = alpha(z).unwrap();
        let back = z * a.cos();
        prop_assert!((back - 1.0).norm() <= 1e-12 * z.norm().max(1.0), "z = {z}, z cos a = {back}");
    }

    #[test]
    fn alpha_real_part_in_quarter(z in omega_point()) {
        let a = alpha(z).unwrap();
        prop_assert!(a.re > 0.0 && a.re < PI / 2.0 + 1e-15, "z = {z}, a = {a}");
    }

    #[test]
    fn alpha_on_rotated_ray(y in 1e-3f64..1e3, p in 1.01f64..8.0) {
        let z = C64::new(0.0, y).powf(1.0 / p);
        let a = alpha(z).unwrap();
        prop_assert!(a.re > PI / (2.0 * p) && a.re < PI / 2.0, "y = {y}, p = {p}, a = {a}");
    }

    #[test]
    fn gamma_star_decreases(x in 1.0f64..50.0, dx in 1e-3f64..10.0) {
        prop_assert!(gamma_star(x + dx).unwrap() < gamma_star(x).unwrap());
    }

    #[test]
    fn eigenfunction_is_real_on_unit_interval(x in 1e-6f64..1.0, mu in 0.0f64..30.0) {
        let s = eigfun_u(C64::new(x, 0.0), mu).unwrap();
        prop_assert!(s.value.im.abs() <= 1e-8 * s.value.norm().max(1e-300));
        prop_assert!((s.value.re - u_real(x, mu)).abs() <= 1e-8 * s.value.re.abs().max(1e-8));
    }
}

#[test]
fn alpha_at_sqrt_i() {
    let z = C64::new(0.0, 1.0).sqrt();
    let a = alpha(z).unwrap();
    assert!(a.re > PI / 4.0 && a.re < PI / 2.0);
}
