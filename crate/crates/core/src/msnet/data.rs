use crate::error::{Error, Result};
use crate::statmap::PatchSet;
use crate::volgrid::Cube;

/// One training or evaluation sample: a patch per landmark, in landmark
/// order, plus optional standardized biomarkers.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub subject: usize,
    pub label: u8,
    pub cubes: Vec<Cube>,
    pub biomarkers: Option<[f32; 6]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub patch_size: usize,
    pub n_landmarks: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// `labels` and `biomarkers` are indexed by the patch set's subject index.
    pub fn from_patchset(ps: PatchSet, labels: &[u8], biomarkers: Option<&[[f64; 6]]>) -> Result<Self> {
        let mut samples = Vec::with_capacity(ps.tuples.len());
        for t in ps.tuples {
            let label = *labels
                .get(t.subject)
                .ok_or_else(|| Error::ShapeMismatch(format!("no label for subject {}", t.subject)))?;
            if label > 1 {
                return Err(Error::Data(format!("label {label} is not 0 or 1")));
            }
            let bio = match biomarkers {
                Some(b) => {
                    let row = b
                        .get(t.subject)
                        .ok_or_else(|| Error::ShapeMismatch(format!("no biomarkers for subject {}", t.subject)))?;
                    Some(row.map(|v| v as f32))
                }
                None => None,
            };
            samples.push(Sample { subject: t.subject, label, cubes: t.cubes, biomarkers: bio });
        }
        Ok(Self { patch_size: ps.size, n_landmarks: ps.n_landmarks, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Every patch as its own one-landmark sample, labelled by its subject.
    pub fn single_patches(&self) -> Dataset {
        let samples = self
            .samples
            .iter()
            .flat_map(|s| {
                s.cubes.iter().map(move |c| Sample {
                    subject: s.subject,
                    label: s.label,
                    cubes: vec![c.clone()],
                    biomarkers: s.biomarkers,
                })
            })
            .collect();
        Dataset { patch_size: self.patch_size, n_landmarks: 1, samples }
    }
}
