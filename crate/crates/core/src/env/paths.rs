use crate::error::{Error, Result};

/// Number of monotone lattice paths corner to corner on a grid with the
/// given extents: `(Σ(dᵢ−1))! / Π(dᵢ−1)!`.
pub fn count_monotone_paths(dims: &[usize]) -> Result<u128> {
    if !(dims.len() == 2 || dims.len() == 3) || dims.contains(&0) {
        return Err(Error::InvalidInput(format!("bad grid dims {dims:?}")));
    }
    let overflow = || Error::Overflow(format!("path count for {dims:?}"));
    // multinomial as a product of binomials C(total, k)
    let mut count: u128 = 1;
    let mut total: u128 = 0;
    for &d in dims {
        let k = (d - 1) as u128;
        total += k;
        let mut binom: u128 = 1;
        for i in 1..=k {
            // binom * (total - k + i) is divisible by i at every step
            let num = total - k + i;
            let g = gcd(binom, i);
            binom = (binom / g)
                .checked_mul(num / (i / g))
                .ok_or_else(overflow)?;
        }
        count = count.checked_mul(binom).ok_or_else(overflow)?;
    }
    Ok(count)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
