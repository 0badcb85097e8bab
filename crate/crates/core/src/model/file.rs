//! JSON plant files.
//!
//! ```text
//! {"type": "stationary", "A": [[..]], "B": .., "W": .., "Q": .., "R": .., "P_init": ..(optional)}
//! {"type": "tv", "T": 3, "A": [[[..]], ..], .., "P_init": [[..]]}
//! {"type": "po", .. as "tv" .., "H": [..], "G": [..]}
//! ```
//! Matrices are row-major arrays of rows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PartiallyObservedPlant, PlantModel, StationaryPlant, TimeVaryingPlant};
use crate::error::{Error, Result};
use crate::linalg::Mat;

pub(crate) type Rows = Vec<Vec<f64>>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type")]
enum PlantFile {
    #[serde(rename = "stationary")]
    Stationary {
        #[serde(rename = "A")]
        a: Rows,
        #[serde(rename = "B")]
        b: Rows,
        #[serde(rename = "W")]
        w: Rows,
        #[serde(rename = "Q")]
        q: Rows,
        #[serde(rename = "R")]
        r: Rows,
        #[serde(rename = "P_init", default, skip_serializing_if = "Option::is_none")]
        p_init: Option<Rows>,
    },
    #[serde(rename = "tv")]
    TimeVarying(StagedFile),
    #[serde(rename = "po")]
    PartiallyObserved {
        #[serde(flatten)]
        base: StagedFile,
        #[serde(rename = "H")]
        h: Vec<Rows>,
        #[serde(rename = "G")]
        g: Vec<Rows>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct StagedFile {
    #[serde(rename = "T")]
    horizon: usize,
    #[serde(rename = "A")]
    a: Vec<Rows>,
    #[serde(rename = "B")]
    b: Vec<Rows>,
    #[serde(rename = "W")]
    w: Vec<Rows>,
    #[serde(rename = "Q")]
    q: Vec<Rows>,
    #[serde(rename = "R")]
    r: Vec<Rows>,
    #[serde(rename = "P_init")]
    p_init: Rows,
}

pub(crate) fn to_mat(rows: &Rows, name: &str) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Parse(format!(
            "{name}: row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub(crate) fn from_mat(m: &Mat) -> Rows {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn to_mats(stages: &[Rows], name: &str) -> Result<Vec<Mat>> {
    stages
        .iter()
        .enumerate()
        .map(|(t, rows)| to_mat(rows, &format!("{name}[{t}]")))
        .collect()
}

fn from_mats(ms: &[Mat]) -> Vec<Rows> {
    ms.iter().map(from_mat).collect()
}

impl StagedFile {
    fn into_plant(self) -> Result<TimeVaryingPlant> {
        let plant = TimeVaryingPlant {
            a: to_mats(&self.a, "A")?,
            b: to_mats(&self.b, "B")?,
            w: to_mats(&self.w, "W")?,
            q: to_mats(&self.q, "Q")?,
            r: to_mats(&self.r, "R")?,
            p_init: to_mat(&self.p_init, "P_init")?,
        };
        if plant.a.len() != self.horizon {
            return Err(Error::Parse(format!(
                "T = {} but A has {} stages",
                self.horizon,
                plant.a.len()
            )));
        }
        Ok(plant)
    }

    fn from_plant(p: &TimeVaryingPlant) -> Self {
        StagedFile {
            horizon: p.horizon(),
            a: from_mats(&p.a),
            b: from_mats(&p.b),
            w: from_mats(&p.w),
            q: from_mats(&p.q),
            r: from_mats(&p.r),
            p_init: from_mat(&p.p_init),
        }
    }
}

/// Parse a plant from JSON text without validating it.
pub fn parse_plant(text: &str) -> Result<PlantModel> {
    let file: PlantFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(match file {
        PlantFile::Stationary {
            a,
            b,
            w,
            q,
            r,
            p_init,
        } => PlantModel::Stationary(StationaryPlant {
            a: to_mat(&a, "A")?,
            b: to_mat(&b, "B")?,
            w: to_mat(&w, "W")?,
            q: to_mat(&q, "Q")?,
            r: to_mat(&r, "R")?,
            p_init: p_init.as_ref().map(|p| to_mat(p, "P_init")).transpose()?,
        }),
        PlantFile::TimeVarying(staged) => PlantModel::TimeVarying(staged.into_plant()?),
        PlantFile::PartiallyObserved { base, h, g } => {
            PlantModel::PartiallyObserved(PartiallyObservedPlant {
                base: base.into_plant()?,
                h: to_mats(&h, "H")?,
                g: to_mats(&g, "G")?,
            })
        }
    })
}

pub fn plant_to_json(plant: &PlantModel) -> String {
    let file = match plant {
        PlantModel::Stationary(p) => PlantFile::Stationary {
            a: from_mat(&p.a),
            b: from_mat(&p.b),
            w: from_mat(&p.w),
            q: from_mat(&p.q),
            r: from_mat(&p.r),
            p_init: p.p_init.as_ref().map(from_mat),
        },
        PlantModel::TimeVarying(p) => PlantFile::TimeVarying(StagedFile::from_plant(p)),
        PlantModel::PartiallyObserved(p) => PlantFile::PartiallyObserved {
            base: StagedFile::from_plant(&p.base),
            h: from_mats(&p.h),
            g: from_mats(&p.g),
        },
    };
    serde_json::to_string_pretty(&file).expect("plant serialization cannot fail")
}

/// Read, parse, and validate a plant file.
pub fn load_plant(path: impl AsRef<Path>) -> Result<PlantModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut plant = parse_plant(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    plant.validate()?;
    Ok(plant)
}

pub fn save_plant(path: impl AsRef<Path>, plant: &PlantModel) -> Result<()> {
    std::fs::write(path, plant_to_json(plant) + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;
    use proptest::prelude::*;

    #[test]
    fn four_state_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plant.json");
        save_plant(
            &path,
            &PlantModel::Stationary(fixtures::four_state_example()),
        )
        .unwrap();
        match load_plant(&path).unwrap() {
            PlantModel::Stationary(p) => {
                assert_eq!(p.state_dim(), 4);
                assert_eq!(p.input_dim(), 4);
                assert_eq!(p.a[(1, 2)], 1.57);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tv_file_parses() {
        let text = r#"{"type":"tv","T":2,
            "A":[[[2]],[[2]]],"B":[[[1]],[[1]]],"W":[[[1]],[[1]]],
            "Q":[[[1]],[[1]]],"R":[[[1]],[[1]]],"P_init":[[1]]}"#;
        match parse_plant(text).unwrap() {
            PlantModel::TimeVarying(p) => assert_eq!(p.horizon(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_named() {
        let text = r#"{"type":"stationary","A":[[2]],"B":[[1]],"W":[[1]],"Q":[[1]]}"#;
        let err = parse_plant(text).unwrap_err().to_string();
        assert!(err.contains("missing field `R`"), "{err}");
    }

    #[test]
    fn truncated_text_reports_position() {
        let text = r#"{"type":"stationary","A":[[2]],"B":[["#;
        let err = parse_plant(text).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let text =
            r#"{"type":"stationary","A":[[2, 1],[1]],"B":[[1]],"W":[[1]],"Q":[[1]],"R":[[1]]}"#;
        assert!(parse_plant(text).unwrap_err().to_string().contains("row 1"));
    }

    fn arb_mat(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
        proptest::collection::vec(
            any::<f64>().prop_filter("finite", |x| x.is_finite()),
            rows * cols,
        )
        .prop_map(move |v| Mat::from_row_slice(rows, cols, &v))
    }

    proptest! {
        #[test]
        fn plant_file_round_trips_exactly(
            a in arb_mat(2, 2), b in arb_mat(2, 1), w in arb_mat(2, 2),
            q in arb_mat(2, 2), r in arb_mat(1, 1), p in arb_mat(2, 2),
        ) {
            let stationary = PlantModel::Stationary(StationaryPlant {
                a: a.clone(), b: b.clone(), w: w.clone(), q: q.clone(), r: r.clone(), p_init: Some(p.clone()),
            });
            prop_assert_eq!(parse_plant(&plant_to_json(&stationary)).unwrap(), stationary);

            let po = PlantModel::PartiallyObserved(PartiallyObservedPlant {
                base: TimeVaryingPlant {
                    a: vec![a.clone(), w.clone()], b: vec![b.clone(), b], w: vec![w.clone(), a],
                    q: vec![q.clone(), q], r: vec![r.clone(), r], p_init: p,
                },
                h: vec![w.clone()], g: vec![w],
            });
            prop_assert_eq!(parse_plant(&plant_to_json(&po)).unwrap(), po);
        }
    }
}
