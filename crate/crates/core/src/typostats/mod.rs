//! Typological distances over categorical feature tables, the shipped
//! distance and results fixtures, correlation, and report output.

mod fixtures;
mod report;

pub use fixtures::{appendix_results, spanish_distances, AppendixRow, DistanceEntry, DistanceFixture, ResultGroup};
pub use report::{emit_report, Report, ReportEntry, ReportFormat, TrialPoint};

use std::collections::HashSet;

pub const MISSING: &str = "-";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TypoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate {what} {name:?}")]
    Duplicate { what: &'static str, name: String },
    #[error("unknown language {0:?}")]
    UnknownLanguage(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("feature {feature:?} is missing for {language:?}")]
    NotShared { feature: String, language: String },
    #[error("need at least {needed} points, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("zero variance: correlation undefined")]
    ZeroVariance,
    #[error("x and y differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no distance for natural-language L1 {0:?}")]
    MissingDistance(String),
}

/// Languages by features; `None` marks a value that is not reported.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub languages: Vec<String>,
    pub features: Vec<String>,
    values: Vec<Vec<Option<String>>>,
}

impl FeatureTable {
    pub fn new(
        languages: Vec<String>,
        features: Vec<String>,
        values: Vec<Vec<Option<String>>>,
    ) -> Result<Self, TypoError> {
        check_unique("language", &languages)?;
        check_unique("feature", &features)?;
        if values.len() != languages.len() || values.iter().any(|r| r.len() != features.len()) {
            return Err(TypoError::Parse {
                line: 0,
                msg: "value grid does not match languages x features".into(),
            });
        }
        Ok(Self {
            languages,
            features,
            values,
        })
    }

    /// Tab-separated: a header of `<label>` then feature ids, then one row per
    /// language with its name first. `-` marks a missing value.
    pub fn parse_tsv(text: &str) -> Result<Self, TypoError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(TypoError::Parse {
            line: 1,
            msg: "empty table".into(),
        })?;
        let features: Vec<String> = header.split('\t').skip(1).map(|s| s.trim().to_string()).collect();
        let mut languages = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines {
            let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cells.len() != features.len() + 1 {
                return Err(TypoError::Parse {
                    line: i + 1,
                    msg: format!("{} cells, expected {}", cells.len(), features.len() + 1),
                });
            }
            languages.push(cells[0].to_string());
            values.push(
                cells[1..]
                    .iter()
                    .map(|c| (*c != MISSING && !c.is_empty()).then(|| c.to_string()))
                    .collect(),
            );
        }
        Self::new(languages, features, values)
    }

    fn lang_index(&self, name: &str) -> Result<usize, TypoError> {
        self.languages
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| TypoError::UnknownLanguage(name.to_string()))
    }

    fn feature_index(&self, id: &str) -> Result<usize, TypoError> {
        self.features
            .iter()
            .position(|f| f == id)
            .ok_or_else(|| TypoError::UnknownFeature(id.to_string()))
    }

    pub fn value(&self, language: &str, feature: &str) -> Result<Option<&str>, TypoError> {
        let (l, f) = (self.lang_index(language)?, self.feature_index(feature)?);
        Ok(self.values[l][f].as_deref())
    }
}

fn check_unique(what: &'static str, names: &[String]) -> Result<(), TypoError> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(TypoError::Duplicate { what, name: n.clone() });
        }
    }
    Ok(())
}

/// Features reported for every language in `langs`, in table order.
pub fn shared_features(t: &FeatureTable, langs: &[&str]) -> Result<Vec<String>, TypoError> {
    let idx: Vec<usize> = langs.iter().map(|l| t.lang_index(l)).collect::<Result<_, _>>()?;
    Ok(t
        .features
        .iter()
        .enumerate()
        .filter(|(f, _)| idx.iter().all(|&l| t.values[l][*f].is_some()))
        .map(|(_, id)| id.clone())
        .collect())
}

/// Number of features in `features` on which `a` and `b` differ.
pub fn wals_distance(t: &FeatureTable, a: &str, b: &str, features: &[String]) -> Result<u32, TypoError> {
    let (ia, ib) = (t.lang_index(a)?, t.lang_index(b)?);
    let mut d = 0;
    for id in features {
        let f = t.feature_index(id)?;
        let va = t.values[ia][f].as_ref().ok_or_else(|| TypoError::NotShared {
            feature: id.clone(),
            language: a.to_string(),
        })?;
        let vb = t.values[ib][f].as_ref().ok_or_else(|| TypoError::NotShared {
            feature: id.clone(),
            language: b.to_string(),
        })?;
        d += u32::from(va != vb);
    }
    Ok(d)
}

/// Pairwise distances over the features shared by the whole language set.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    pub languages: Vec<String>,
    pub shared: usize,
    dist: Vec<u32>,
}

impl DistanceTable {
    pub fn build(t: &FeatureTable, langs: &[&str]) -> Result<Self, TypoError> {
        let feats = shared_features(t, langs)?;
        let n = langs.len();
        let mut dist = vec![0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = wals_distance(t, langs[i], langs[j], &feats)?;
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Ok(Self {
            languages: langs.iter().map(|s| s.to_string()).collect(),
            shared: feats.len(),
            dist,
        })
    }

    pub fn get(&self, a: &str, b: &str) -> Option<u32> {
        let i = self.languages.iter().position(|l| l == a)?;
        let j = self.languages.iter().position(|l| l == b)?;
        Some(self.dist[i * self.languages.len() + j])
    }
}

/// Squared Pearson correlation.
pub fn pearson_r2(x: &[f64], y: &[f64]) -> Result<f64, TypoError> {
    if x.len() != y.len() {
        return Err(TypoError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(TypoError::TooFew { needed: 3, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(TypoError::ZeroVariance);
    }
    Ok((sxy * sxy / (sxx * syy)).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "lang\tf1\tf2\tf3\nA\tx\ty\tz\nB\tx\t-\tw\nC\tq\ty\tz\n";

    #[test]
    fn parse_and_share() {
        let t = FeatureTable::parse_tsv(TABLE).unwrap();
        assert_eq!(t.value("B", "f2").unwrap(), None);
        assert_eq!(shared_features(&t, &["A", "C"]).unwrap(), vec!["f1", "f2", "f3"]);
        assert_eq!(shared_features(&t, &["A", "B", "C"]).unwrap(), vec!["f1", "f3"]);
        assert!(matches!(shared_features(&t, &["Z"]), Err(TypoError::UnknownLanguage(_))));
    }

    #[test]
    fn distances() {
        let t = FeatureTable::parse_tsv(TABLE).unwrap();
        let all = ["f1".to_string(), "f2".to_string(), "f3".to_string()];
        assert_eq!(wals_distance(&t, "A", "A", &all).unwrap(), 0);
        assert_eq!(wals_distance(&t, "A", "C", &all).unwrap(), 1);
        assert!(matches!(wals_distance(&t, "A", "B", &all), Err(TypoError::NotShared { .. })));
        let d = DistanceTable::build(&t, &["A", "B", "C"]).unwrap();
        assert_eq!(d.shared, 2);
        assert_eq!(d.get("B", "C"), Some(2));
        assert_eq!(d.get("C", "B"), Some(2));
    }

    #[test]
    fn duplicates_rejected() {
        assert!(matches!(
            FeatureTable::parse_tsv("l\tf\tf\nA\t1\t2\n"),
            Err(TypoError::Duplicate { what: "feature", .. })
        ));
        assert!(matches!(
            FeatureTable::parse_tsv("l\tf\nA\t1\nA\t2\n"),
            Err(TypoError::Duplicate { what: "language", .. })
        ));
        assert!(matches!(FeatureTable::parse_tsv("l\tf\nA\t1\t2\n"), Err(TypoError::Parse { line: 2, .. })));
    }

    #[test]
    fn r2_basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson_r2(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(pearson_r2(&x, &[5.0; 4]), Err(TypoError::ZeroVariance));
        assert!(matches!(pearson_r2(&x[..2], &y[..2]), Err(TypoError::TooFew { .. })));
    }
}
