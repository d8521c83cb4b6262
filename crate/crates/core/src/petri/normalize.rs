use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{ToPrimitive, Zero};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Z-scores with population standard deviation.
///
/// Computed in exact rational arithmetic with one final correctly rounded
/// square root, so `normalize(a·v + b) == normalize(v)` bit for bit whenever
/// `a·v + b` is itself exactly representable.
pub fn normalize(values: &[f64]) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "normalize needs at least two values, got {n}"
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss(format!("cannot normalize {v}")));
    }
    let parts: Vec<(BigInt, i32)> = values.iter().map(|&v| decompose(v)).collect();
    let emin = parts
        .iter()
        .filter(|(m, _)| !m.is_zero())
        .map(|&(_, e)| e)
        .min()
        .unwrap_or(0);
    // common fixed-point scale; z-scores are invariant to it
    let ints: Vec<BigInt> = parts
        .into_iter()
        .map(|(m, e)| if m.is_zero() { m } else { m << (e - emin) as usize })
        .collect();
    let total: BigInt = ints.iter().sum();
    let nb = BigInt::from(n);
    let dev: Vec<BigInt> = ints.iter().map(|y| &nb * y - &total).collect();
    let q: BigUint = dev.iter().map(|d| (d * d).magnitude().clone()).sum();
    if q.is_zero() {
        return Err(Error::DegenerateVariance(n));
    }
    let nu = BigUint::from(n);
    Ok(dev
        .iter()
        .map(|d| {
            let p = &nu * d.magnitude() * d.magnitude();
            let r = sqrt_ratio(&p, &q);
            if d.sign() == Sign::Minus {
                -r
            } else {
                r
            }
        })
        .collect())
}

/// `(m, e)` with `x = m · 2^e` exactly.
fn decompose(x: f64) -> (BigInt, i32) {
    if x == 0.0 {
        return (BigInt::zero(), 0);
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (m, e) = if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    };
    let m = BigInt::from(m);
    (if x < 0.0 { -m } else { m }, e)
}

/// Correctly rounded `√(p/q)` for `q > 0`.
fn sqrt_ratio(p: &BigUint, q: &BigUint) -> f64 {
    if p.is_zero() {
        return 0.0;
    }
    // scale by 4^s so the integer root carries at least 64 bits
    let need = 130i64 + q.bits() as i64 - p.bits() as i64;
    let s = (need.max(0) as u64).div_ceil(2);
    let num = p << (2 * s) as usize;
    let t = &num / q;
    let rem_nonzero = !(&num % q).is_zero();
    let r = t.sqrt();
    let inexact = rem_nonzero || &r * &r != t;
    let bits = r.bits();
    let shift = bits - 54;
    let top = (&r >> shift as usize).to_u64().expect("54 bits");
    let low_nonzero = !(&r & ((BigUint::from(1u8) << shift as usize) - 1u8)).is_zero();
    let sticky = inexact || low_nonzero;
    let mut mant = top >> 1;
    if top & 1 == 1 && (sticky || mant & 1 == 1) {
        mant += 1;
    }
    let exp = shift as i32 + 1 - s as i32;
    mant as f64 * 2f64.powi(exp)
}

/// In-graph z-scores of a column or vector of losses.
pub fn normalize_var<S: Scalar>(g: &mut Graph<S>, v: Var) -> Result<Var> {
    let n = g.value(v).len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "normalize needs at least two values, got {n}"
        )));
    }
    let shape = g.shape(v).to_vec();
    let m = g.mean(v);
    let mb = g.broadcast_scalar(m, &shape)?;
    let d = g.sub(v, mb)?;
    let sq = g.square(d);
    let var = g.mean(sq);
    let vv = g.item(var)?;
    if vv == S::zero() {
        return Err(Error::DegenerateVariance(n));
    }
    if !vv.is_finite() {
        return Err(Error::NonFiniteLoss(format!("loss variance {vv}")));
    }
    let sd = g.sqrt(var);
    let sdb = g.broadcast_scalar(sd, &shape)?;
    g.div(d, sdb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures() {
        assert_eq!(normalize(&[0.0, 2.0]).unwrap(), vec![-1.0, 1.0]);
        let z = normalize(&[1.0, 2.0, 3.0]).unwrap();
        let r = 1.5f64.sqrt();
        assert_eq!(z, vec![-r, 0.0, r]);
        assert!((z[2] - 1.22474).abs() < 1e-5);
        assert!(matches!(normalize(&[4.0, 4.0, 4.0]), Err(Error::DegenerateVariance(3))));
        assert!(normalize(&[1.0]).is_err());
    }

    #[test]
    fn correctly_rounded_root() {
        for k in 2u32..200 {
            let p = BigUint::from(k);
            let q = BigUint::from(7u32);
            let want = (k as f64 / 7.0).sqrt();
            let got = sqrt_ratio(&p, &q);
            // f64 sqrt is correctly rounded but k/7 is rounded first, so allow 1 ulp
            assert!((got - want).abs() <= want * 2.3e-16, "{k}: {got} vs {want}");
        }
        assert_eq!(sqrt_ratio(&BigUint::from(9u8), &BigUint::from(4u8)), 1.5);
        assert_eq!(sqrt_ratio(&BigUint::from(2u8), &BigUint::from(1u8)), 2f64.sqrt());
    }

    #[test]
    fn handles_wide_exponent_ranges() {
        let z = normalize(&[1e-300, 1.0, -3.5e10, 0.0]).unwrap();
        let m = z.iter().sum::<f64>() / 4.0;
        let v = z.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-15 && (v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn graph_version_agrees() {
        let vals = [0.3, 0.1, 0.7, 0.25];
        let mut g = Graph::<f64>::new();
        let v = g.constant(crate::autodiff::Tensor::new(vec![4, 1], vals.to_vec()).unwrap());
        let z = normalize_var(&mut g, v).unwrap();
        let exact = normalize(&vals).unwrap();
        for (a, b) in g.value(z).data().iter().zip(&exact) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
