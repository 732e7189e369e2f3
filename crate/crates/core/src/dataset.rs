//! Subject-clustered binary choice data.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::model::Prospect;

/// The two options of a binary choice.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub option_a: Prospect,
    pub option_b: Prospect,
}

impl Design {
    fn key(&self) -> Vec<u64> {
        let mut key = Vec::new();
        for option in [&self.option_a, &self.option_b] {
            key.push(u64::MAX);
            for b in option.branches() {
                key.push(b.probability.to_bits());
                for p in b.stream.payments() {
                    key.push(u64::from(p.period));
                    key.push(p.amount.to_bits());
                }
            }
        }
        key
    }
}

/// One observed choice. `chosen_b` is the indicator `c_ij`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChoiceRecord {
    /// Index into [`Dataset::subject_ids`].
    pub subject: usize,
    pub mpl_id: u8,
    pub row: u32,
    /// Index into [`Dataset::designs`].
    pub design: usize,
    pub chosen_b: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    subject_ids: Vec<String>,
    designs: Vec<Design>,
    records: Vec<ChoiceRecord>,
    covariate_names: Vec<String>,
    covariates: Vec<Option<Vec<f64>>>,
    by_subject: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn builder() -> DatasetBuilder {
        DatasetBuilder::default()
    }

    pub fn records(&self) -> &[ChoiceRecord] {
        &self.records
    }

    pub fn designs(&self) -> &[Design] {
        &self.designs
    }

    pub fn design(&self, record: &ChoiceRecord) -> &Design {
        &self.designs[record.design]
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn subject_id(&self, record: &ChoiceRecord) -> &str {
        &self.subject_ids[record.subject]
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    /// Number of subject clusters.
    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record indices of each subject, in subject order.
    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.by_subject
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Covariate vector of subject `subject`.
    pub fn covariates(&self, subject: usize) -> Result<&[f64]> {
        self.covariates
            .get(subject)
            .and_then(|c| c.as_deref())
            .ok_or_else(|| Error::MissingCovariates(self.subject_ids[subject].clone()))
    }

    pub fn has_covariates(&self) -> bool {
        !self.covariate_names.is_empty()
    }

    /// Replaces all covariates; `values` holds one vector per subject.
    pub fn set_covariates(&mut self, names: Vec<String>, values: Vec<Vec<f64>>) -> Result<()> {
        if values.len() != self.n_subjects() {
            return Err(Error::Dataset(format!(
                "{} covariate vectors for {} subjects",
                values.len(),
                self.n_subjects()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| v.len() != names.len()) {
            return Err(Error::Dataset(format!(
                "subject `{}` has {} covariates, expected {}",
                self.subject_ids[i],
                v.len(),
                names.len()
            )));
        }
        self.covariate_names = names;
        self.covariates = values.into_iter().map(Some).collect();
        Ok(())
    }

    /// Keeps only the subjects for which `keep` returns true.
    pub fn filter_subjects(&self, mut keep: impl FnMut(&str) -> bool) -> Dataset {
        let mut b = DatasetBuilder::default();
        b.covariate_names = self.covariate_names.clone();
        for rec in &self.records {
            let id = &self.subject_ids[rec.subject];
            if keep(id) {
                b.push(id, rec.mpl_id, rec.row, self.designs[rec.design].clone(), rec.chosen_b)
                    .expect("records of a valid dataset stay unique");
            }
        }
        for (i, id) in self.subject_ids.iter().enumerate() {
            if let (Some(&s), Some(c)) = (b.subject_index.get(id), &self.covariates[i]) {
                b.covariates[s] = Some(c.clone());
            }
        }
        b.build()
    }

    /// Keeps only the records of the listed MPLs.
    pub fn filter_mpls(&self, mpl_ids: &[u8]) -> Dataset {
        let mut b = DatasetBuilder::default();
        b.covariate_names = self.covariate_names.clone();
        for rec in self.records.iter().filter(|r| mpl_ids.contains(&r.mpl_id)) {
            let id = &self.subject_ids[rec.subject];
            b.push(id, rec.mpl_id, rec.row, self.designs[rec.design].clone(), rec.chosen_b)
                .expect("records of a valid dataset stay unique");
        }
        for (i, id) in self.subject_ids.iter().enumerate() {
            if let (Some(&s), Some(c)) = (b.subject_index.get(id), &self.covariates[i]) {
                b.covariates[s] = Some(c.clone());
            }
        }
        b.build()
    }
}

#[derive(Debug, Default)]
pub struct DatasetBuilder {
    subject_ids: Vec<String>,
    subject_index: HashMap<String, usize>,
    designs: Vec<Design>,
    design_index: HashMap<Vec<u64>, usize>,
    records: Vec<ChoiceRecord>,
    seen: HashSet<(usize, u8, u32)>,
    covariate_names: Vec<String>,
    covariates: Vec<Option<Vec<f64>>>,
}

impl DatasetBuilder {
    pub fn with_covariate_names(mut self, names: Vec<String>) -> Self {
        self.covariate_names = names;
        self
    }

    fn subject(&mut self, id: &str) -> usize {
        if let Some(&i) = self.subject_index.get(id) {
            return i;
        }
        let i = self.subject_ids.len();
        self.subject_ids.push(id.to_string());
        self.subject_index.insert(id.to_string(), i);
        self.covariates.push(None);
        i
    }

    /// Adds a record. `(subject_id, mpl_id, row)` must be unique.
    pub fn push(&mut self, subject_id: &str, mpl_id: u8, row: u32, design: Design, chosen_b: bool) -> Result<()> {
        let subject = self.subject(subject_id);
        if !self.seen.insert((subject, mpl_id, row)) {
            return Err(Error::Dataset(format!(
                "duplicate record for subject `{subject_id}`, MPL {mpl_id}, row {row}"
            )));
        }
        let key = design.key();
        let design = match self.design_index.get(&key) {
            Some(&d) => d,
            None => {
                let d = self.designs.len();
                self.designs.push(design);
                self.design_index.insert(key, d);
                d
            }
        };
        self.records.push(ChoiceRecord {
            subject,
            mpl_id,
            row,
            design,
            chosen_b,
        });
        Ok(())
    }

    /// Sets the covariate vector of a subject. Repeated calls must agree.
    pub fn set_covariates(&mut self, subject_id: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.covariate_names.len() {
            return Err(Error::Dataset(format!(
                "subject `{subject_id}` has {} covariates, expected {}",
                values.len(),
                self.covariate_names.len()
            )));
        }
        let s = self.subject(subject_id);
        match &self.covariates[s] {
            Some(existing) if existing != &values => Err(Error::Dataset(format!(
                "covariates of subject `{subject_id}` differ between rows"
            ))),
            _ => {
                self.covariates[s] = Some(values);
                Ok(())
            }
        }
    }

    pub fn build(self) -> Dataset {
        let mut by_subject = vec![Vec::new(); self.subject_ids.len()];
        for (i, r) in self.records.iter().enumerate() {
            by_subject[r.subject].push(i);
        }
        Dataset {
            subject_ids: self.subject_ids,
            designs: self.designs,
            records: self.records,
            covariate_names: self.covariate_names,
            covariates: self.covariates,
            by_subject,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PaymentStream;

    fn design(x: f64) -> Design {
        Design {
            option_a: Prospect::zero(),
            option_b: Prospect::degenerate(PaymentStream::pair(0, x, 1, -15.0).unwrap()),
        }
    }

    #[test]
    fn designs_are_shared_and_duplicates_rejected() {
        let mut b = Dataset::builder();
        b.push("a", 6, 1, design(31.0), true).unwrap();
        b.push("b", 6, 1, design(31.0), false).unwrap();
        b.push("a", 6, 2, design(27.0), true).unwrap();
        assert!(b.push("a", 6, 1, design(31.0), false).is_err());
        let d = b.build();
        assert_eq!(d.designs().len(), 2);
        assert_eq!(d.n_subjects(), 2);
        assert_eq!(d.clusters()[0], vec![0, 2]);
        assert_eq!(d.subject_id(&d.records()[1]), "b");
    }

    #[test]
    fn missing_covariates_name_the_subject() {
        let mut b = Dataset::builder().with_covariate_names(vec!["age".into()]);
        b.push("s1", 1, 1, design(20.0), true).unwrap();
        b.push("s2", 1, 1, design(20.0), true).unwrap();
        b.set_covariates("s1", vec![0.5]).unwrap();
        assert!(b.set_covariates("s1", vec![0.7]).is_err());
        assert!(b.set_covariates("s1", vec![0.5, 1.0]).is_err());
        let d = b.build();
        assert_eq!(d.covariates(0).unwrap(), &[0.5]);
        match d.covariates(1) {
            Err(Error::MissingCovariates(id)) => assert_eq!(id, "s2"),
            other => panic!("{other:?}"),
        }
    }
}
