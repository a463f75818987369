//! Randomized checks of the algebraic properties patterns rely on.

use std::cmp::Ordering;
use std::fmt::Debug;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Law {
    Associativity,
    Commutativity,
    Identity,
    Monotonicity,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{law:?} violated: {detail}")]
pub struct LawViolation {
    pub law: Law,
    pub detail: String,
}

/// Check associativity, commutativity and the identity law of `oplus` on
/// `trials` triples drawn from `sample`.
pub fn check_oplus_laws<S, Op, G>(oplus: Op, zero: &S, mut sample: G, trials: usize) -> Result<(), LawViolation>
where
    S: PartialEq + Debug,
    Op: Fn(&S, &S) -> S,
    G: FnMut() -> S,
{
    for _ in 0..trials {
        let (a, b, c) = (sample(), sample(), sample());
        let left = oplus(&oplus(&a, &b), &c);
        let right = oplus(&a, &oplus(&b, &c));
        if left != right {
            return Err(LawViolation {
                law: Law::Associativity,
                detail: format!("({a:?} ⊕ {b:?}) ⊕ {c:?} = {left:?} but {a:?} ⊕ ({b:?} ⊕ {c:?}) = {right:?}"),
            });
        }
        let ab = oplus(&a, &b);
        let ba = oplus(&b, &a);
        if ab != ba {
            return Err(LawViolation {
                law: Law::Commutativity,
                detail: format!("{a:?} ⊕ {b:?} = {ab:?} but {b:?} ⊕ {a:?} = {ba:?}"),
            });
        }
        let az = oplus(&a, zero);
        let za = oplus(zero, &a);
        if az != a || za != a {
            return Err(LawViolation {
                law: Law::Identity,
                detail: format!("{a:?} ⊕ {zero:?} = {az:?}, {zero:?} ⊕ {a:?} = {za:?}"),
            });
        }
    }
    Ok(())
}

/// Check that `update(x, s)` never makes the state worse whenever
/// `condition(x, s)` holds.
pub fn check_monotone_update<T, S, C, U, O>(
    condition: C,
    update: U,
    order: O,
    samples: impl IntoIterator<Item = (T, S)>,
) -> Result<(), LawViolation>
where
    T: Debug,
    S: Debug,
    C: Fn(&T, &S) -> bool,
    U: Fn(&T, &S) -> S,
    O: Fn(&S, &S) -> Ordering,
{
    for (x, s) in samples {
        if condition(&x, &s) {
            let next = update(&x, &s);
            if order(&next, &s) == Ordering::Greater {
                return Err(LawViolation {
                    law: Law::Monotonicity,
                    detail: format!("update({x:?}, {s:?}) = {next:?} is worse than {s:?}"),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wrapping_add_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        check_oplus_laws(|a: &i64, b: &i64| a.wrapping_add(*b), &0, || rng.random(), 10_000).unwrap();
    }

    #[test]
    fn subtraction_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let err = check_oplus_laws(|a: &i64, b: &i64| a.wrapping_sub(*b), &0, || rng.random(), 100).unwrap_err();
        assert_eq!(err.law, Law::Associativity);
    }

    #[test]
    fn wrong_identity_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let err = check_oplus_laws(|a: &i64, b: &i64| *a.max(b), &0, || rng.random(), 100).unwrap_err();
        assert_eq!(err.law, Law::Identity);
    }

    #[test]
    fn monotone_min_update() {
        let samples = (0..100i64).flat_map(|x| (0..100i64).map(move |s| (x, s)));
        check_monotone_update(|x: &i64, s: &i64| x < s, |x: &i64, _| *x, i64::cmp, samples).unwrap();
        let bad = check_monotone_update(|_: &i64, _: &i64| true, |x: &i64, _| *x, i64::cmp, [(5, 1)]);
        assert_eq!(bad.unwrap_err().law, Law::Monotonicity);
    }
}
