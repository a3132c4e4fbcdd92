#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algos;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod oracle;
pub mod provider;
pub mod recnet;
pub mod recovery;

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident) => {
            #[doc = include_str!(concat!("../../../book/src/", stringify!($name), ".md"))]
            mod $name {}
        };
    }
    chapter!(introduction);
    chapter!(fairness);
    chapter!(consul);
    chapter!(baselines);
    chapter!(recovery);
    chapter!(evaluation);
    chapter!(cli);

    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
