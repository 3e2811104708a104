//! Polynomial file format: a JSON list of `{vars: [[id, exp], …], re, im}`
//! records, monomials in lexicographic `(var id, exponent)` order.

use serde::{Deserialize, Serialize};

use super::{CPoly, Monomial, PolyError};
use crate::expr::Var;
use num_complex::Complex64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyRecord {
    pub vars: Vec<(u32, u32)>,
    pub re: f64,
    pub im: f64,
}

impl CPoly {
    pub fn to_records(&self) -> Vec<PolyRecord> {
        self.terms()
            .map(|(m, c)| PolyRecord {
                vars: m.pairs().iter().map(|&(v, e)| (v.0, e)).collect(),
                re: c.re,
                im: c.im,
            })
            .collect()
    }

    pub fn from_records(records: &[PolyRecord]) -> Result<CPoly, PolyError> {
        let mut p = CPoly::zero();
        for r in records {
            if r.vars.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(PolyError::Format(format!("unsorted or repeated vars {:?}", r.vars)));
            }
            if r.vars.iter().any(|&(_, e)| e == 0) {
                return Err(PolyError::Format(format!("zero exponent in {:?}", r.vars)));
            }
            let m = Monomial::from_pairs(r.vars.iter().map(|&(v, e)| (Var(v), e)));
            if p.coeff(&m) != Complex64::new(0.0, 0.0) {
                return Err(PolyError::Format(format!("duplicate monomial {:?}", r.vars)));
            }
            p.add_term(m, Complex64::new(r.re, r.im));
        }
        Ok(p)
    }
}

pub fn write_json(p: &CPoly) -> String {
    serde_json::to_string_pretty(&p.to_records()).expect("records serialize")
}

pub fn read_json(text: &str) -> Result<CPoly, PolyError> {
    let records: Vec<PolyRecord> =
        serde_json::from_str(text).map_err(|e| PolyError::Format(e.to_string()))?;
    CPoly::from_records(&records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_poly() -> impl Strategy<Value = CPoly> {
        let coef = (any::<f64>(), any::<f64>())
            .prop_filter("finite", |(a, b)| a.abs() < 1e300 && b.abs() < 1e300);
        let mono = proptest::collection::vec((0u32..6, 1u32..9), 0..4);
        proptest::collection::vec((mono, coef), 0..12).prop_map(|terms| {
            CPoly::from_terms(terms.into_iter().map(|(m, (re, im))| {
                (Monomial::from_pairs(m.into_iter().map(|(v, e)| (Var(v), e))), Complex64::new(re, im))
            }))
        })
    }

    proptest! {
        #[test]
        fn json_round_trip_is_exact(p in arb_poly()) {
            let back = read_json(&write_json(&p)).unwrap();
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn layout_is_sorted_records() {
        let p = CPoly::from_terms([
            (Monomial::from_pairs([(Var(2), 1)]), Complex64::new(1.5, 0.0)),
            (Monomial::from_pairs([(Var(1), 2), (Var(2), 1)]), Complex64::new(0.0, -1.0)),
        ]);
        let recs = p.to_records();
        assert_eq!(recs[0].vars, vec![(1, 2), (2, 1)]);
        assert_eq!(recs[1].vars, vec![(2, 1)]);
        let text = write_json(&p);
        assert!(text.contains("\"re\""));
    }

    #[test]
    fn rejects_malformed_records() {
        assert!(read_json("[{\"vars\": [[2,1],[1,1]], \"re\": 1.0, \"im\": 0.0}]").is_err());
        assert!(read_json("[{\"vars\": [[1,0]], \"re\": 1.0, \"im\": 0.0}]").is_err());
        assert!(read_json("{}").is_err());
    }
}
