//! The nine built-in multiple price lists.
//!
//! MPL1 trades money today against €18 in four weeks, MPL2 and MPL3 are
//! coin-flip lotteries paid today, MPL4/MPL5 are saving contracts and
//! MPL6/MPL7 debt contracts over four weeks (starting today and in four
//! weeks respectively), and MPL8/MPL9 are eight-week saving and debt
//! contracts starting today.
//!
//! Contract lists are oriented so that option B is "accept the contract" and
//! option A is the zero prospect (reject, no payments).

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::dataset::Design;
use crate::model::{ContractKind, PaymentStream, Prospect};

const MPL1_TODAY: [f64; 10] = [18.2, 18.0, 17.8, 17.3, 16.8, 16.0, 14.0, 12.0, 10.0, 8.0];
const MPL2_SURE: [f64; 10] = [30.0, 25.0, 20.0, 17.0, 16.0, 15.0, 12.0, 10.0, 5.0, 1.0];
const MPL3_RISKY: [(f64, f64); 10] = [
    (17.0, 1.0),
    (20.0, 1.0),
    (25.0, 1.0),
    (28.0, 1.0),
    (29.0, 1.0),
    (30.0, 2.0),
    (30.0, 3.0),
    (32.0, 8.0),
    (32.0, 10.0),
    (32.0, 14.0),
];
const MPL4_RECEIVE: [f64; 15] = [
    45.0, 40.0, 36.0, 34.0, 32.0, 30.0, 28.0, 26.0, 24.0, 22.0, 20.0, 18.0, 16.0, 14.0, 12.0,
];
const MPL5_RECEIVE: [f64; 15] = [
    40.0, 35.0, 31.0, 29.0, 27.0, 25.0, 23.0, 21.0, 19.0, 17.0, 15.0, 13.0, 11.0, 9.0, 7.0,
];
const MPL6_LOAN: [f64; 15] = [
    31.0, 27.0, 24.0, 21.0, 19.0, 17.0, 16.0, 15.0, 14.0, 13.0, 11.0, 9.0, 7.0, 5.0, 3.0,
];
const MPL7_LOAN: [f64; 15] = [
    33.0, 30.0, 27.0, 24.0, 22.0, 20.0, 18.0, 16.0, 15.0, 14.0, 12.0, 10.0, 8.0, 6.0, 3.0,
];
const MPL8_RECEIVE: [f64; 15] = [
    50.0, 45.0, 40.0, 36.0, 34.0, 32.0, 30.0, 28.0, 26.0, 24.0, 22.0, 20.0, 18.0, 16.0, 14.0,
];
const MPL9_LOAN: [f64; 15] = [
    39.0, 35.0, 31.0, 27.0, 24.0, 21.0, 19.0, 17.0, 16.0, 15.0, 14.0, 13.0, 11.0, 9.0, 7.0,
];

/// Fixed leg of every contract.
pub const CONTRACT_LEG: f64 = 15.0;

/// MPLs of the main experiment.
pub const MAIN_MPLS: [u8; 7] = [1, 2, 3, 4, 5, 6, 7];
/// MPLs including the eight-week extension.
pub const ALL_MPLS: [u8; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

#[derive(Clone, Debug, PartialEq)]
pub struct MplCatalog {
    mpls: BTreeMap<u8, Vec<Design>>,
}

fn sure(x: f64) -> PaymentStream {
    PaymentStream::single(0, x)
}

fn contract(t: u32, x_t: f64, big_t: u32, x_big_t: f64) -> Design {
    Design {
        option_a: Prospect::zero(),
        option_b: Prospect::degenerate(PaymentStream::pair(t, x_t, big_t, x_big_t).expect("catalog periods increase")),
    }
}

/// Builds the built-in catalog.
pub fn load_catalog() -> MplCatalog {
    let mut mpls = BTreeMap::new();
    mpls.insert(
        1,
        MPL1_TODAY
            .iter()
            .map(|&x| Design {
                option_a: Prospect::degenerate(sure(x)),
                option_b: Prospect::degenerate(PaymentStream::single(1, 18.0)),
            })
            .collect(),
    );
    mpls.insert(
        2,
        MPL2_SURE
            .iter()
            .map(|&x| Design {
                option_a: Prospect::coin_flip(sure(x), sure(x)),
                option_b: Prospect::coin_flip(sure(30.0), sure(1.0)),
            })
            .collect(),
    );
    mpls.insert(
        3,
        MPL3_RISKY
            .iter()
            .map(|&(heads, tails)| Design {
                option_a: Prospect::coin_flip(sure(14.0), sure(17.0)),
                option_b: Prospect::coin_flip(sure(heads), sure(tails)),
            })
            .collect(),
    );
    let lists: [(u8, &[f64; 15], fn(f64) -> Design); 6] = [
        (4, &MPL4_RECEIVE, |x| contract(0, -CONTRACT_LEG, 1, x)),
        (5, &MPL5_RECEIVE, |x| contract(1, -CONTRACT_LEG, 2, x)),
        (6, &MPL6_LOAN, |x| contract(0, x, 1, -CONTRACT_LEG)),
        (7, &MPL7_LOAN, |x| contract(1, x, 2, -CONTRACT_LEG)),
        (8, &MPL8_RECEIVE, |x| contract(0, -CONTRACT_LEG, 2, x)),
        (9, &MPL9_LOAN, |x| contract(0, x, 2, -CONTRACT_LEG)),
    ];
    for (id, amounts, build) in lists {
        mpls.insert(id, amounts.iter().map(|&x| build(x)).collect());
    }
    MplCatalog { mpls }
}

impl MplCatalog {
    pub fn from_rows(rows: BTreeMap<u8, Vec<Design>>) -> Self {
        Self { mpls: rows }
    }

    /// Design of a 1-based row.
    pub fn row(&self, mpl_id: u8, row: u32) -> Option<&Design> {
        let idx = usize::try_from(row).ok()?.checked_sub(1)?;
        self.mpls.get(&mpl_id)?.get(idx)
    }

    pub fn rows(&self, mpl_id: u8) -> &[Design] {
        self.mpls.get(&mpl_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn mpl_ids(&self) -> impl Iterator<Item = u8> + '_ {
        self.mpls.keys().copied()
    }

    /// Total number of choices.
    pub fn len(&self) -> usize {
        self.mpls.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(mpl_id, row, design)` for every choice, in list order.
    pub fn iter(&self) -> impl Iterator<Item = (u8, u32, &Design)> {
        self.mpls
            .iter()
            .flat_map(|(&id, rows)| rows.iter().enumerate().map(move |(i, d)| (id, i as u32 + 1, d)))
    }

    /// Whether the list's option B is a contract (accept/reject list).
    pub fn is_contract_list(&self, mpl_id: u8) -> bool {
        self.rows(mpl_id).iter().any(|d| {
            d.option_b
                .branches()
                .iter()
                .any(|b| crate::model::classify(&b.stream) != ContractKind::Other)
        })
    }

    /// Canonical text rendering; see [`crate::data::io::write_catalog`].
    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        crate::data::io::write_catalog_to(&mut out, self).expect("writing to memory");
        String::from_utf8(out).expect("catalog text is UTF-8")
    }

    /// SHA-256 of the canonical CSV rendering, hex encoded.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_csv_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
