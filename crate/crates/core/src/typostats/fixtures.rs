//! Shipped reference data: WALS-syntax distances from Spanish and the
//! per-L1 transfer results table.

use super::TypoError;

const DISTANCES_TSV: &str = include_str!("../../data/wals_distances_es.tsv");
const RESULTS_TSV: &str = include_str!("../../data/transfer_results.tsv");

const INDO_EUROPEAN: [&str; 3] = ["Romance", "Germanic", "Slavic"];

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceEntry {
    pub code: String,
    pub name: String,
    pub family: String,
    pub distance: u32,
    /// Number of features the distance was counted over.
    pub shared: u32,
    pub aliases: Vec<String>,
}

impl DistanceEntry {
    pub fn is_indo_european(&self) -> bool {
        INDO_EUROPEAN.contains(&self.family.as_str())
    }

    pub fn matches(&self, name: &str) -> bool {
        let n = name.trim();
        n.eq_ignore_ascii_case(&self.code)
            || n.eq_ignore_ascii_case(&self.name)
            || self.aliases.iter().any(|a| n.eq_ignore_ascii_case(a))
    }
}

/// Distances from one reference language.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceFixture {
    pub reference: String,
    pub entries: Vec<DistanceEntry>,
}

impl DistanceFixture {
    /// Columns: `code name family distance shared_features aliases`, aliases
    /// comma-separated.
    pub fn parse_tsv(reference: &str, text: &str) -> Result<Self, TypoError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
            let c: Vec<&str> = line.split('\t').collect();
            let err = |msg: &str| TypoError::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            if c.len() < 5 {
                return Err(err("expected at least 5 columns"));
            }
            let distance: u32 = c[3].trim().parse().map_err(|_| err("bad distance"))?;
            let shared: u32 = c[4].trim().parse().map_err(|_| err("bad shared count"))?;
            if distance > shared {
                return Err(err("distance exceeds shared feature count"));
            }
            entries.push(DistanceEntry {
                code: c[0].trim().to_string(),
                name: c[1].trim().to_string(),
                family: c[2].trim().to_string(),
                distance,
                shared,
                aliases: c
                    .get(5)
                    .map(|a| a.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
                    .unwrap_or_default(),
            });
        }
        Ok(Self {
            reference: reference.to_string(),
            entries,
        })
    }

    /// Looks up by code, name or alias, case-insensitively.
    pub fn lookup(&self, name: &str) -> Option<&DistanceEntry> {
        self.entries.iter().find(|e| e.matches(name))
    }

    /// Distance between two listed languages when one of them is the
    /// reference.
    pub fn distance(&self, a: &str, b: &str) -> Option<u32> {
        let ea = self.lookup(a)?;
        let eb = self.lookup(b)?;
        if ea.matches(&self.reference) {
            Some(eb.distance)
        } else if eb.matches(&self.reference) {
            Some(ea.distance)
        } else {
            None
        }
    }
}

/// WALS-syntax distances of twelve languages from Spanish over 49 features.
pub fn spanish_distances() -> DistanceFixture {
    DistanceFixture::parse_tsv("es", DISTANCES_TSV).expect("shipped fixture parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultGroup {
    Random,
    NonLinguistic,
    Parens,
    Language,
}

/// One line of the results table, with values kept as printed.
#[derive(Debug, Clone, PartialEq)]
pub struct AppendixRow {
    pub l1: String,
    pub mean: String,
    pub std: String,
    pub group: ResultGroup,
}

impl AppendixRow {
    pub fn mean_value(&self) -> f64 {
        self.mean.parse().expect("fixture numbers parse")
    }

    pub fn std_value(&self) -> f64 {
        self.std.parse().expect("fixture numbers parse")
    }
}

/// Mean and standard deviation of L2 test perplexity per L1, five seeds each.
pub fn appendix_results() -> Vec<AppendixRow> {
    RESULTS_TSV
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            AppendixRow {
                l1: c[0].to_string(),
                mean: c[1].to_string(),
                std: c[2].to_string(),
                group: match c[3] {
                    "random" => ResultGroup::Random,
                    "non-linguistic" => ResultGroup::NonLinguistic,
                    "parens" => ResultGroup::Parens,
                    _ => ResultGroup::Language,
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_fixture_lookup() {
        let d = spanish_distances();
        assert_eq!(d.entries.len(), 12);
        assert_eq!(d.distance("es", "pt"), Some(3));
        assert_eq!(d.distance("Japanese", "Spanish"), Some(23));
        assert_eq!(d.lookup("Portoguese").unwrap().code, "pt");
        assert_eq!(d.distance("pt", "it"), None);
        assert_eq!(d.entries.iter().filter(|e| e.is_indo_european()).count(), 7);
    }

    #[test]
    fn results_fixture_shape() {
        let r = appendix_results();
        assert_eq!(r.len(), 18);
        assert_eq!(r.iter().filter(|x| x.group == ResultGroup::Language).count(), 12);
        assert_eq!((r[0].mean.as_str(), r[0].std.as_str()), ("513.66", "1.01"));
    }
}
