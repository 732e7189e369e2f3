//! Built-in price lists, choice files and the choice simulator.

pub mod catalog;
pub mod io;
pub mod simulate;

pub use catalog::{load_catalog, MplCatalog, ALL_MPLS, CONTRACT_LEG, MAIN_MPLS};
pub use io::{
    read_catalog, read_choices, read_choices_with, read_prospects_jsonl, write_catalog, write_choices,
    write_prospects_jsonl,
};
pub use simulate::{simulate, simulate_subjects, Population};
