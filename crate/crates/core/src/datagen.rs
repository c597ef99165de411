//! Seeded synthetic data for the builtin schema.
//!
//! The generator is ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `GenConfig::seed`. Values come from stream 0; defect injection draws
//! from stream 1, so changing an injection rate never perturbs the clean
//! values around the injected cells.
//!
//! Distributions are uniform for categorical picks and dates. Areas and
//! quantities use `exp(ln(median) + spread * z)` where `z` is the sum of
//! three uniforms on [-1, 1], clamped to a documented range:
//!
//! | value                | median | spread | range        |
//! |----------------------|--------|--------|--------------|
//! | Yield `area_ha`      | 8      | 0.9    | [0.5, 200]   |
//! | yield per hectare    | 6      | 0.25   | [1, 15]      |
//! | Trading `quantity_t` | 12     | 0.8    | [0.1, 500]   |
//! | other quantities     | 40     | 0.7    | [0.1, 2000]  |
//!
//! Output is the storage persistence layout (`schema.txt`, `dim/*.csv`,
//! `fact/<name>.base.csv`) plus `manifest.json` with the config used.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{builtin_schema, serialize_schema, AttributeKind, ConstellationSchema, DimensionDef};
use crate::storage::Partition;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub farmers: usize,
    pub fields_per_farmer_min: usize,
    pub fields_per_farmer_max: usize,
    pub crops: usize,
    pub products: usize,
    pub start_year: i32,
    pub years: u32,
    /// Upper bound per fact; duplicate key tuples are dropped.
    pub rows_per_fact: usize,
    /// Probability that a fact key or dimension link names no member.
    pub unknown_ref_rate: f64,
    /// Probability that a plain (non-key, non-link) dimension cell is blank.
    pub null_rate: f64,
}

pub fn default_config() -> GenConfig {
    GenConfig {
        seed: DEFAULT_SEED,
        farmers: 50,
        fields_per_farmer_min: 1,
        fields_per_farmer_max: 5,
        crops: 12,
        products: 40,
        start_year: 2019,
        years: 3,
        rows_per_fact: 10_000,
        unknown_ref_rate: 0.0,
        null_rate: 0.0,
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.unknown_ref_rate) {
            return bad("unknown_ref_rate must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.null_rate) {
            return bad("null_rate must lie in [0, 1]");
        }
        if self.fields_per_farmer_min > self.fields_per_farmer_max {
            return bad("fields_per_farmer_min exceeds fields_per_farmer_max");
        }
        if self.years == 0 {
            return bad("years must be at least 1");
        }
        if NaiveDate::from_ymd_opt(self.start_year, 1, 1).is_none()
            || NaiveDate::from_ymd_opt(self.start_year + self.years as i32, 1, 1).is_none()
        {
            return bad("year span is out of range");
        }
        Ok(())
    }

    /// Member count of every generated dimension.
    fn cardinalities(&self, fields: usize) -> BTreeMap<&'static str, usize> {
        let scaled = |per: usize, min: usize| (self.rows_per_fact / per).max(min);
        BTreeMap::from([
            ("Business", 10),
            ("Crop", self.crops),
            ("Disease", 15),
            ("Drilling", 30),
            ("Farmer", self.farmers),
            ("Field", fields),
            ("Fertiliser", 25),
            ("Inspection", 60),
            ("Maintenance", 40),
            ("Order", scaled(5, 20)),
            ("Pest", 15),
            ("Planning", 60),
            ("Plow", 30),
            ("Product", self.products),
            ("Purchaser", 15),
            ("Soil", fields),
            ("Supplier", 15),
            ("Water_Utilization", 40),
            ("Weather_Station", 8),
        ])
    }
}

/// Counts of what a run emitted, including every injected defect.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GenSummary {
    pub rows: BTreeMap<String, usize>,
    pub dangling_references: usize,
    pub null_cells: usize,
}

/// A generated dataset held in memory: relative path to file contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub files: BTreeMap<PathBuf, Vec<u8>>,
    pub summary: GenSummary,
}

const CROP_NAMES: [&str; 6] = ["wheat", "barley", "maize", "rapeseed", "sugar beet", "potato"];
const PRODUCT_GROUPS: [&str; 8] = [
    "nitrogen fertiliser",
    "phosphate fertiliser",
    "herbicide",
    "fungicide",
    "insecticide",
    "cereal seed",
    "oilseed seed",
    "growth regulator",
];
const PRODUCT_TYPES: [&str; 3] = ["fertiliser", "crop protection", "seed"];
const DISEASE_TYPES: [&str; 4] = ["fungal", "bacterial", "viral", "physiological"];
const PEST_TYPES: [&str; 4] = ["insect", "mite", "nematode", "rodent"];
const WORDS: [&str; 12] = [
    "north", "south", "river", "hill", "oak", "meadow", "stone", "mill", "green", "lake", "ridge", "valley",
];

struct Gen {
    rng: ChaCha8Rng,
    inject: ChaCha8Rng,
    config: GenConfig,
    first_day: NaiveDate,
    days: i64,
    summary: GenSummary,
}

fn z(rng: &mut ChaCha8Rng) -> f64 {
    (0..3).map(|_| rng.gen_range(-1.0..=1.0)).sum()
}

impl Gen {
    fn lognormal(&mut self, median: f64, spread: f64, lo: f64, hi: f64) -> f64 {
        (median.ln() + spread * z(&mut self.rng)).exp().clamp(lo, hi)
    }

    fn date(&mut self) -> NaiveDate {
        self.first_day + Duration::days(self.rng.gen_range(0..self.days))
    }

    fn pick(&mut self, n: usize) -> i64 {
        self.rng.gen_range(1..=n as i64)
    }

    /// Whether the next reference should dangle. Always consumes one draw.
    fn dangle(&mut self) -> bool {
        let u: f64 = self.inject.gen();
        u < self.config.unknown_ref_rate
    }

    fn blank(&mut self) -> bool {
        let u: f64 = self.inject.gen();
        u < self.config.null_rate
    }
}

/// A key guaranteed to name no member of a dimension with `n` members.
fn missing_key(n: usize, salt: usize) -> i64 {
    (n + 1_000_000 + salt) as i64
}

fn render_dec(x: f64, places: usize) -> String {
    format!("{x:.places$}")
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Plain attribute value for member `i` (1-based) of `dim`.
fn plain_value(g: &mut Gen, dim: &str, attr: &str, kind: AttributeKind, i: usize) -> String {
    let word = |k: usize| WORDS[k % WORDS.len()];
    match (dim, attr) {
        ("Crop", "name") => CROP_NAMES[(i - 1) % CROP_NAMES.len()].to_string(),
        ("Crop", "variety_name") => format!("{} v{i}", CROP_NAMES[(i - 1) % CROP_NAMES.len()]),
        ("Crop", "code") => format!("C{i:03}"),
        ("Product", "product_name") => format!("product {i}"),
        ("Product", "group_name") => PRODUCT_GROUPS[(i - 1) % PRODUCT_GROUPS.len()].to_string(),
        ("Product", "type_name") => {
            let group = (i - 1) % PRODUCT_GROUPS.len();
            PRODUCT_TYPES[match group {
                0 | 1 => 0,
                5 | 6 => 2,
                _ => 1,
            }]
            .to_string()
        }
        ("Field", "name") => format!("{} field {i}", word(i)),
        ("Field", "block") => format!("block {}", (i - 1) / 6 + 1),
        ("Disease", "name") => format!("disease {i}"),
        ("Disease", "type") => DISEASE_TYPES[(i - 1) % DISEASE_TYPES.len()].to_string(),
        ("Pest", "common_name") => format!("pest {i}"),
        ("Pest", "type") => PEST_TYPES[(i - 1) % PEST_TYPES.len()].to_string(),
        ("Order", "order_date") => {
            // every configured year gets orders
            let year = g.config.start_year + ((i - 1) % g.config.years as usize) as i32;
            let d = g.date();
            let d = d.with_year(year).unwrap_or_else(|| d.with_day(28).and_then(|d| d.with_year(year)).expect("valid"));
            d.format("%Y-%m-%d").to_string()
        }
        ("Farmer", "sex") => ["female", "male"][g.rng.gen_range(0..2)].to_string(),
        ("Farmer", "birth_year") => g.rng.gen_range(1950..=1995).to_string(),
        ("Soil", "ph_value") => render_dec(g.rng.gen_range(4.5..8.5), 2),
        ("Field", "area") | ("Field", "working_area") | ("Farmer", "field_area") => {
            render_dec(g.lognormal(8.0, 0.9, 0.5, 200.0), 2)
        }
        _ => match kind {
            AttributeKind::Decimal => render_dec(g.rng.gen_range(0.0..100.0), 2),
            AttributeKind::Integer => g.rng.gen_range(0..1000).to_string(),
            AttributeKind::Date => g.date().format("%Y-%m-%d").to_string(),
            _ => {
                let w = g.rng.gen_range(0..WORDS.len());
                format!("{} {attr} {i}", WORDS[w])
            }
        },
    }
}

fn dimension_rows(
    g: &mut Gen,
    def: &DimensionDef,
    n: usize,
    sizes: &BTreeMap<&'static str, usize>,
    farmer_of_field: &[i64],
) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(n);
    for i in 1..=n {
        let mut row = Vec::with_capacity(def.attributes.len());
        for a in &def.attributes {
            if a.name == def.key {
                row.push(i.to_string());
                continue;
            }
            if let Some(link) = def.links.iter().find(|l| l.attribute == a.name) {
                let target = sizes[link.target.as_str()];
                let natural = match (def.name.as_str(), a.name.as_str()) {
                    ("Field", "farmer_id") => farmer_of_field[i - 1],
                    ("Soil", "field_id") if target > 0 => ((i - 1) % target + 1) as i64,
                    _ if target > 0 => g.pick(target),
                    _ => 0,
                };
                // an empty target makes every link dangle
                let key = if g.dangle() || natural == 0 {
                    g.summary.dangling_references += 1;
                    missing_key(target, g.summary.dangling_references)
                } else {
                    natural
                };
                row.push(key.to_string());
                continue;
            }
            let v = plain_value(g, &def.name, &a.name, a.kind, i);
            if g.blank() {
                g.summary.null_cells += 1;
                row.push(String::new());
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    rows
}

fn fact_measures(g: &mut Gen, fact: &str) -> Vec<String> {
    match fact {
        "Yield" => {
            let area = g.lognormal(8.0, 0.9, 0.5, 200.0);
            let per_ha = g.lognormal(6.0, 0.25, 1.0, 15.0);
            vec![render_dec(area * per_ha, 3), render_dec(area, 2)]
        }
        "Trading" => {
            let q = g.lognormal(12.0, 0.8, 0.1, 500.0);
            let price = g.rng.gen_range(100.0..900.0);
            vec![render_dec(q, 3), render_dec(q * price, 2)]
        }
        "Operation" => vec![
            render_dec(g.lognormal(40.0, 0.7, 0.1, 2000.0) * 10.0, 2),
            render_dec(g.lognormal(40.0, 0.7, 0.1, 2000.0), 3),
        ],
        _ => vec![
            render_dec(g.lognormal(40.0, 0.7, 0.1, 2000.0), 3),
            render_dec(g.lognormal(40.0, 0.7, 0.1, 2000.0) * 5.0, 2),
        ],
    }
}

fn fact_rows(g: &mut Gen, schema: &ConstellationSchema, fact: &str, sizes: &BTreeMap<&'static str, usize>) -> Vec<Vec<String>> {
    let def = schema.fact(fact).expect("builtin fact");
    let dims: Vec<usize> = def.dimensions.iter().map(|d| sizes[d.as_str()]).collect();
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut rows = Vec::new();
    if dims.iter().any(|&n| n == 0) {
        return rows;
    }
    for _ in 0..g.config.rows_per_fact {
        let natural: Vec<i64> = dims.iter().map(|&n| g.pick(n)).collect();
        let dangling: Vec<bool> = dims.iter().map(|_| g.dangle()).collect();
        let measures = fact_measures(g, fact);
        // ETL maps dangling keys to the UNKNOWN member, so uniqueness is
        // checked on that resolved tuple
        let resolved: Vec<i64> = natural.iter().zip(&dangling).map(|(k, d)| if *d { 0 } else { *k }).collect();
        if !seen.insert(resolved) {
            continue;
        }
        let mut row = Vec::with_capacity(dims.len() + measures.len());
        for ((k, d), n) in natural.iter().zip(&dangling).zip(&dims) {
            if *d {
                g.summary.dangling_references += 1;
                row.push(missing_key(*n, g.summary.dangling_references).to_string());
            } else {
                row.push(k.to_string());
            }
        }
        row.extend(measures);
        rows.push(row);
    }
    rows
}

/// Generates the dataset for `config` in memory.
pub fn generate_dataset(config: &GenConfig) -> Result<Dataset, GenError> {
    config.validate()?;
    let schema = builtin_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut inject = ChaCha8Rng::seed_from_u64(config.seed);
    inject.set_stream(1);
    let first_day = NaiveDate::from_ymd_opt(config.start_year, 1, 1).expect("validated");
    let end = NaiveDate::from_ymd_opt(config.start_year + config.years as i32, 1, 1).expect("validated");

    let farmer_of_field: Vec<i64> = (1..=config.farmers as i64)
        .flat_map(|f| {
            let n = rng.gen_range(config.fields_per_farmer_min..=config.fields_per_farmer_max);
            std::iter::repeat(f).take(n)
        })
        .collect();
    let sizes = config.cardinalities(farmer_of_field.len());
    let mut g = Gen {
        rng,
        inject,
        config: config.clone(),
        first_day,
        days: (end - first_day).num_days(),
        summary: GenSummary::default(),
    };

    let mut files = BTreeMap::new();
    files.insert(PathBuf::from("schema.txt"), serialize_schema(&schema).into_bytes());
    for def in schema.dimensions.values() {
        let n = sizes[def.name.as_str()];
        let rows = dimension_rows(&mut g, def, n, &sizes, &farmer_of_field);
        let header: Vec<String> = def.attributes.iter().map(|a| a.name.clone()).collect();
        g.summary.rows.insert(def.name.clone(), rows.len());
        files.insert(PathBuf::from("dim").join(format!("{}.csv", def.name)), csv_bytes(&header, &rows));
    }
    for def in schema.facts.values() {
        let rows = fact_rows(&mut g, &schema, &def.name, &sizes);
        let mut header: Vec<String> = def.dimensions.iter().map(|d| schema.dimensions[d].key.clone()).collect();
        header.extend(def.stored_measures().map(|m| m.name.clone()));
        g.summary.rows.insert(def.name.clone(), rows.len());
        let name = format!("{}.{}.csv", def.name, Partition::Base);
        files.insert(PathBuf::from("fact").join(name), csv_bytes(&header, &rows));
    }
    #[derive(Serialize)]
    struct Manifest<'a> {
        generator: &'static str,
        config: &'a GenConfig,
        summary: &'a GenSummary,
    }
    let manifest = Manifest {
        generator: "ChaCha8",
        config,
        summary: &g.summary,
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    files.insert(PathBuf::from("manifest.json"), json);
    Ok(Dataset {
        files,
        summary: g.summary,
    })
}

/// Generates the dataset for `config` and writes it under `out`.
pub fn generate(config: &GenConfig, out: &Path) -> Result<GenSummary, GenError> {
    let data = generate_dataset(config)?;
    for (rel, bytes) in &data.files {
        let path = out.join(rel);
        let io = |source| GenError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        fs::write(&path, bytes).map_err(io)?;
    }
    Ok(data.summary)
}
