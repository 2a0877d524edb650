//! On-disk formats, cohort loading, synthetic data and splits.
//!
//! A cohort directory produced by [`write_dataset`] looks like:
//!
//! ```text
//! manifest.csv        sample_id,bag_path,t_months,event,genomic_path
//! categories.json     {category: [gene, ...]} in token order
//! bags/<id>.mgcb      binary bag files (see [`bag`])
//! genomics/<id>.csv   gene,value
//! truth.csv           sample_id,risk (synthetic cohorts only)
//! ```

pub mod bag;
pub mod genomics;
pub mod manifest;
pub mod splits;
pub mod synth;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

pub use bag::{read_bag, write_bag};
pub use genomics::{group_genomics, read_gene_table, write_gene_table, CategoryMap};
pub use manifest::{read_manifest, write_manifest, SampleDescriptor};
pub use splits::{monte_carlo_splits, read_splits, write_splits, FoldSplit};
pub use synth::{synthesize, SynthConfig, SynthSummary};

use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// One patient: a patch bag, grouped genomics and a survival outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// `d_in × N` instance embeddings.
    pub patches: Tensor,
    /// One raw vector per functional category.
    pub genomic: Vec<Vec<f64>>,
    /// Months to death or censoring.
    pub t: f64,
    /// `true` when death was observed.
    pub event: bool,
    /// Ground-truth log-hazard, known only for synthetic cohorts.
    pub truth_risk: Option<f64>,
}

impl Sample {
    pub fn validate(&self, categories: usize) -> Result<()> {
        if self.patches.cols() == 0 {
            return Err(Error::Contract(format!("sample {} has an empty bag", self.id)));
        }
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(Error::Contract(format!("sample {} has non-positive time {}", self.id, self.t)));
        }
        if self.genomic.len() != categories {
            return Err(Error::Contract(format!(
                "sample {} has {} genomic categories, expected {categories}",
                self.id,
                self.genomic.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub categories: CategoryMap,
}

impl Dataset {
    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.id.clone()).collect()
    }

    pub fn d_in(&self) -> usize {
        self.samples.first().map_or(0, |s| s.patches.rows())
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.samples.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect()
    }

    /// Samples in the order of `ids`; unknown ids are an error.
    pub fn select(&self, ids: &[String]) -> Result<Vec<&Sample>> {
        let index = self.index();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&i| &self.samples[i])
                    .ok_or_else(|| Error::Contract(format!("unknown sample id `{id}`")))
            })
            .collect()
    }
}

/// Conventional category map location next to a manifest.
pub fn default_category_path(manifest: &Path) -> PathBuf {
    manifest::manifest_base(manifest).join("categories.json")
}

/// Loads every sample listed in a manifest. Fails as a whole on the first
/// bad file.
pub fn load_dataset(manifest_path: impl AsRef<Path>, category_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let categories = CategoryMap::read(category_path)?;
    let base = manifest::manifest_base(manifest_path);
    let rows = read_manifest(manifest_path)?;
    let mut samples = Vec::with_capacity(rows.len());
    let mut d_in = None;
    for row in rows {
        let bag_path = row.resolved_bag(&base);
        let patches = read_bag(&bag_path)?;
        if *d_in.get_or_insert(patches.rows()) != patches.rows() {
            return Err(Error::format(
                bag_path,
                format!("embedding width {} differs from earlier bags ({})", patches.rows(), d_in.unwrap()),
            ));
        }
        let gpath = row.resolved_genomic(&base);
        let table = read_gene_table(&gpath)?;
        let genomic = group_genomics(&table, &categories).map_err(|e| Error::ingest(&gpath, None, e.to_string()))?;
        samples.push(Sample {
            id: row.sample_id,
            patches,
            genomic,
            t: row.t_months,
            event: row.event,
            truth_risk: None,
        });
    }
    if samples.is_empty() {
        return Err(Error::ingest(manifest_path, None, "manifest lists no samples"));
    }
    Ok(Dataset { samples, categories })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes a cohort directory and returns the manifest path.
pub fn write_dataset(dir: impl AsRef<Path>, ds: &Dataset) -> Result<PathBuf> {
    let dir = dir.as_ref();
    create_dir(&dir.join("bags"))?;
    create_dir(&dir.join("genomics"))?;
    ds.categories.write(dir.join("categories.json"))?;

    let mut rows = Vec::with_capacity(ds.samples.len());
    for s in &ds.samples {
        let bag_rel = PathBuf::from("bags").join(format!("{}.mgcb", s.id));
        let gen_rel = PathBuf::from("genomics").join(format!("{}.csv", s.id));
        write_bag(dir.join(&bag_rel), &s.patches)?;
        let table: Vec<(String, f64)> = (0..ds.categories.len())
            .flat_map(|c| ds.categories.genes(c).iter().cloned().zip(s.genomic[c].iter().copied()))
            .collect();
        write_gene_table(dir.join(&gen_rel), &table)?;
        rows.push(SampleDescriptor {
            sample_id: s.id.clone(),
            bag_path: bag_rel,
            t_months: s.t,
            event: s.event,
            genomic_path: gen_rel,
        });
    }
    let manifest_path = dir.join("manifest.csv");
    write_manifest(&manifest_path, &rows)?;

    if ds.samples.iter().all(|s| s.truth_risk.is_some()) {
        let path = dir.join("truth.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| manifest::csv_error(&path, e))?;
        w.write_record(["sample_id", "risk"]).map_err(|e| manifest::csv_error(&path, e))?;
        for s in &ds.samples {
            w.write_record([s.id.as_str(), &s.truth_risk.unwrap().to_string()])
                .map_err(|e| manifest::csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(manifest_path)
}
