use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tabular::{BiomarkerRecord, BIOMARKER_FIELDS};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Volume path as written in the manifest (relative paths are resolved
    /// against the manifest's directory by [`CohortManifest::resolve`]).
    pub path: PathBuf,
    pub label: u8,
    pub biomarkers: Option<BiomarkerRecord>,
}

/// Cohort listing: one `path,label,<6 biomarkers>` record per line, missing
/// biomarker values written as `NA`. An optional first line
/// `# classes: 0=<name>,1=<name>` carries the class names.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortManifest {
    pub class_names: [String; 2],
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

impl CohortManifest {
    pub fn new(class_names: [String; 2], entries: Vec<ManifestEntry>, base_dir: PathBuf) -> Result<Self> {
        let m = Self { class_names, entries, base_dir };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if e.label > 1 {
                return Err(Error::Data(format!("{}: label {} not in {{0,1}}", e.path.display(), e.label)));
            }
            if !seen.insert(&e.path) {
                return Err(Error::Data(format!("duplicate manifest path {}", e.path.display())));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn labels(&self) -> Vec<u8> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# classes: 0={},1={}\n", self.class_names[0], self.class_names[1]);
        for e in &self.entries {
            s.push_str(&format!("{},{}", e.path.display(), e.label));
            for i in 0..BIOMARKER_FIELDS.len() {
                match e.biomarkers.as_ref().and_then(|b| b.0[i]) {
                    Some(v) => s.push_str(&format!(",{v}")),
                    None => s.push_str(",NA"),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn parse(text: &str, base_dir: PathBuf) -> Result<Self> {
        let mut class_names = ["class0".to_string(), "class1".to_string()];
        let mut body = text;
        if let Some(first) = text.lines().next() {
            if let Some(rest) = first.trim().strip_prefix("# classes:") {
                for part in rest.split(',') {
                    let (k, v) = part
                        .trim()
                        .split_once('=')
                        .ok_or_else(|| Error::Data(format!("malformed class map entry '{part}'")))?;
                    match k.trim() {
                        "0" => class_names[0] = v.trim().to_string(),
                        "1" => class_names[1] = v.trim().to_string(),
                        other => return Err(Error::Data(format!("class id {other} not in {{0,1}}"))),
                    }
                }
                body = &text[first.len()..];
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        let mut entries = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 + BIOMARKER_FIELDS.len() {
                return Err(Error::Data(format!(
                    "manifest record {} has {} fields, expected {}",
                    line + 1,
                    rec.len(),
                    2 + BIOMARKER_FIELDS.len()
                )));
            }
            let label: u8 =
                rec[1].parse().map_err(|_| Error::Data(format!("record {}: bad label '{}'", line + 1, &rec[1])))?;
            let mut values = [None; 6];
            for (i, v) in values.iter_mut().enumerate() {
                let field = &rec[2 + i];
                if field != "NA" {
                    let x: f64 = field.parse().map_err(|_| {
                        Error::Data(format!("record {}: bad {} value '{field}'", line + 1, BIOMARKER_FIELDS[i]))
                    })?;
                    if !x.is_finite() {
                        return Err(Error::Data(format!("record {}: non-finite {}", line + 1, BIOMARKER_FIELDS[i])));
                    }
                    *v = Some(x);
                }
            }
            entries.push(ManifestEntry {
                path: PathBuf::from(&rec[0]),
                label,
                biomarkers: values.iter().any(Option::is_some).then_some(BiomarkerRecord(values)),
            });
        }
        Self::new(class_names, entries, base_dir)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }
}
