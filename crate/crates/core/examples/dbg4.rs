use nalgebra::{DMatrix, DVector};
fn main() {
    let w01 = 0.49955427077946796f64;
    let w10 = 2.0017845076965775f64;
    let m = DMatrix::from_row_slice(2, 2, &[1.0, -w01, -w10, 1.0]);
    println!("det = {:e}", m.determinant());
    let lu = m.clone().lu();
    let r = DVector::from_vec(vec![1.0f64, 2.0]);
    println!("lu.solve = {:?}", lu.solve(&r));
    // huge rhs like the chain sees
    let r2 = DVector::from_vec(vec![6.2e17f64, -3.0e17]);
    println!("lu.solve huge = {:?}", lu.solve(&r2));
    // degenerate-direction rhs
    let r3 = DVector::from_vec(vec![f64::NAN, 1.0]);
    println!("lu.solve nan = {:?}", lu.solve(&r3));
}
