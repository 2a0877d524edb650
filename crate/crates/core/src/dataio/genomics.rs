//! Gene tables and functional category maps.
//!
//! A genomic file is a two-column CSV `gene,value`. A category map is a JSON
//! object `{category: [gene, ...]}` whose key order fixes the token order of
//! the genomic bag.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::dataio::manifest::csv_error;
use crate::error::{Error, Result};

/// The six functional gene categories, in token order.
pub const FUNCTIONAL_CATEGORIES: [&str; 6] = [
    "Tumor Suppression",
    "Oncogenesis",
    "Protein Kinases",
    "Cellular Differentiation",
    "Transcription",
    "Cytokines and Growth",
];

/// Ordered assignment of genes to `S` categories.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMap {
    categories: Vec<(String, Vec<String>)>,
}

impl CategoryMap {
    /// Validates: at least one category, none empty, no gene listed twice.
    pub fn new(categories: Vec<(String, Vec<String>)>) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::Contract("category map has no categories".into()));
        }
        let mut seen = HashSet::new();
        for (name, genes) in &categories {
            if genes.is_empty() {
                return Err(Error::Contract(format!("category `{name}` has no genes")));
            }
            for g in genes {
                if !seen.insert(g.as_str()) {
                    return Err(Error::Contract(format!("gene `{g}` is assigned to more than one category")));
                }
            }
        }
        Ok(CategoryMap { categories })
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(|(n, _)| n.as_str())
    }

    pub fn genes(&self, category: usize) -> &[String] {
        &self.categories[category].1
    }

    /// Input length of each category's genomic vector.
    pub fn sizes(&self) -> Vec<usize> {
        self.categories.iter().map(|(_, g)| g.len()).collect()
    }

    pub fn category_of(&self, gene: &str) -> Option<usize> {
        self.categories.iter().position(|(_, genes)| genes.iter().any(|g| g == gene))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: IndexMap<String, Vec<String>> = serde_json::from_str(&text)
            .map_err(|e| Error::ingest(path, Some(e.line()), e.to_string()))?;
        CategoryMap::new(raw.into_iter().collect()).map_err(|e| Error::ingest(path, None, e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw: IndexMap<&str, &Vec<String>> =
            self.categories.iter().map(|(n, g)| (n.as_str(), g)).collect();
        let text = serde_json::to_string_pretty(&raw).expect("string map serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Reads a `gene,value` table, rejecting duplicate genes and non-finite values.
pub fn read_gene_table(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["gene", "value"] {
        return Err(Error::ingest(path, Some(1), "header must be `gene,value`"));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record.position().map(|p| p.line() as usize);
        if record.len() != 2 {
            return Err(Error::ingest(path, row, format!("expected 2 fields, found {}", record.len())));
        }
        let gene = record[0].to_string();
        let value: f64 = record[1]
            .parse()
            .map_err(|_| Error::ingest(path, row, format!("value `{}` is not a number", &record[1])))?;
        if !value.is_finite() {
            return Err(Error::ingest(path, row, format!("non-finite value for `{gene}`")));
        }
        if !seen.insert(gene.clone()) {
            return Err(Error::ingest(path, row, format!("duplicate gene `{gene}`")));
        }
        out.push((gene, value));
    }
    Ok(out)
}

pub fn write_gene_table(path: impl AsRef<Path>, table: &[(String, f64)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["gene", "value"]).map_err(|e| csv_error(path, e))?;
    for (g, v) in table {
        w.write_record([g.as_str(), &v.to_string()]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Groups a gene table into one vector per category, in map order, with
/// genes ordered as listed in the map.
pub fn group_genomics(table: &[(String, f64)], map: &CategoryMap) -> Result<Vec<Vec<f64>>> {
    let values: HashMap<&str, f64> = table.iter().map(|(g, v)| (g.as_str(), *v)).collect();

    let mut unmapped: Vec<&str> = table
        .iter()
        .map(|(g, _)| g.as_str())
        .filter(|g| map.category_of(g).is_none())
        .collect();
    if !unmapped.is_empty() {
        unmapped.sort_unstable();
        return Err(Error::Contract(format!("unmapped genes: {}", unmapped.join(", "))));
    }

    let mut missing = Vec::new();
    let mut grouped = Vec::with_capacity(map.len());
    for s in 0..map.len() {
        let mut v = Vec::with_capacity(map.genes(s).len());
        for g in map.genes(s) {
            match values.get(g.as_str()) {
                Some(&x) => v.push(x),
                None => missing.push(g.as_str()),
            }
        }
        grouped.push(v);
    }
    if !missing.is_empty() {
        return Err(Error::Contract(format!("genes missing from table: {}", missing.join(", "))));
    }
    Ok(grouped)
}
