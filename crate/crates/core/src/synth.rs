//! Synthetic purchase logs with planted brand-following structure.
//!
//! Items are split evenly across brands and assigned a random category.
//! Each user starts in a random brand; every next purchase stays in the
//! current brand with probability `follow`, otherwise jumps to a random
//! brand. Within a brand, items are drawn from a Zipf law.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub brands: usize,
    pub categories: usize,
    pub sequence_len: usize,
    pub follow: f64,
    pub zipf: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 200,
            items: 500,
            brands: 20,
            categories: 10,
            sequence_len: 12,
            follow: 0.9,
            zipf: 1.0,
            seed: 0,
        }
    }
}

/// Tab-separated interaction and metadata files, in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub interactions: String,
    pub metadata: String,
}

pub fn item_key(i: usize) -> String {
    format!("i{i:04}")
}

pub fn brand_key(b: usize) -> String {
    format!("b{b:02}")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    if cfg.brands == 0 || cfg.items < cfg.brands || cfg.categories == 0 {
        return Err(Error::Config("need at least one item per brand and one category".into()));
    }
    let per_brand = cfg.items / cfg.brands;
    if per_brand < cfg.sequence_len {
        return Err(Error::Config("brands must hold at least sequence_len items".into()));
    }
    let mut r = rng::child_rng(cfg.seed, 0);
    let brand_of = |i: usize| (i / per_brand).min(cfg.brands - 1);
    let members: Vec<Vec<usize>> = (0..cfg.brands)
        .map(|b| (0..cfg.items).filter(|&i| brand_of(i) == b).collect())
        .collect();

    let mut metadata = String::new();
    for i in 0..cfg.items {
        let c = r.gen_range(0..cfg.categories);
        writeln!(metadata, "{}\t{}\tc{c:02}", item_key(i), brand_key(brand_of(i))).unwrap();
    }

    let mut interactions = String::new();
    for u in 0..cfg.users {
        let mut brand = r.gen_range(0..cfg.brands);
        let mut bought: Vec<usize> = Vec::new();
        for t in 0..cfg.sequence_len {
            if t > 0 && r.gen::<f64>() >= cfg.follow {
                brand = r.gen_range(0..cfg.brands);
            }
            let pool: Vec<usize> = members[brand].iter().copied().filter(|i| !bought.contains(i)).collect();
            // Zipf over the brand's members in index order
            let weights: Vec<f64> = pool
                .iter()
                .map(|&i| 1.0 / ((i - members[brand][0] + 1) as f64).powf(cfg.zipf))
                .collect();
            let pick = pool[WeightedIndex::new(&weights).unwrap().sample(&mut r)];
            bought.push(pick);
            writeln!(interactions, "u{u:04}\t{}\t{}", item_key(pick), 1_000 + 10 * t).unwrap();
        }
    }
    Ok(SynthData {
        interactions,
        metadata,
    })
}

/// Writes `interactions.tsv` and `metadata.tsv` into `dir`.
pub fn write(data: &SynthData, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let inter = dir.join("interactions.tsv");
    let meta = dir.join("metadata.tsv");
    fs::write(&inter, &data.interactions)?;
    fs::write(&meta, &data.metadata)?;
    Ok((inter, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn sizes_and_determinism() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert_eq!(a.interactions.lines().count(), 200 * 12);
        assert_eq!(a.metadata.lines().count(), 500);
        let brands: std::collections::HashSet<&str> = a.metadata.lines().map(|l| l.split('\t').nth(1).unwrap()).collect();
        assert_eq!(brands.len(), 20);
    }

    #[test]
    fn purchases_mostly_follow_the_brand() {
        let a = generate(&SynthConfig::default()).unwrap();
        let brand: HashMap<&str, &str> = a
            .metadata
            .lines()
            .map(|l| {
                let f: Vec<&str> = l.split('\t').collect();
                (f[0], f[1])
            })
            .collect();
        let rows: Vec<Vec<&str>> = a.interactions.lines().map(|l| l.split('\t').collect()).collect();
        let (mut same, mut total) = (0, 0);
        for w in rows.windows(2) {
            if w[0][0] == w[1][0] {
                total += 1;
                same += (brand[w[0][1]] == brand[w[1][1]]) as usize;
            }
        }
        let frac = same as f64 / total as f64;
        assert!(frac > 0.85, "{frac}");
    }
}
