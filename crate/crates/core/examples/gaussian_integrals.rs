//! Closed-form Gaussian integration against tensor Gauss-Hermite quadrature.
use num_complex::Complex64;
use pmech::gaussian::{quad_oracle_sum, ExponentBuilder, GaussianSum, HermiteRule, Poly};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // exp(-(x^2 + y^2) + 0.4 i x y + 0.3 x) * (1 + x y)
    let e = ExponentBuilder::new(2)
        .product(0, 0, -1.0)
        .product(1, 1, -1.0)
        .product(0, 1, Complex64::new(0.0, 0.4))
        .linear(0, 0.3)
        .build();
    let mut poly = Poly::constant(2, Complex64::new(1.0, 0.0));
    poly.add_term(vec![1, 1], Complex64::new(1.0, 0.0));
    let g = GaussianSum::from_block(e, poly);
    let closed = g.integrate_all()?;
    let quad = quad_oracle_sum(&g, &HermiteRule::new(40))?;
    println!("closed form = {closed}");
    println!("quadrature  = {quad}");
    println!("|diff|      = {:.3e}", (closed - quad).norm());

    // Partial integration over y leaves a Gaussian in x.
    let gx = g.integrate_partial(&[1])?;
    println!("marginal at x = 0.5: {}", gx.evaluate(&[0.5]));
    Ok(())
}
