//! Hetero-functional incidence tensors and matrices.
//!
//! The negative tensor records the operands each capability pulls from each
//! buffer, the positive tensor the operands it injects. Matricizing flattens
//! the (operand, buffer) axes operand-major into rows; capabilities are the
//! columns. `M = M⁺ − M⁻`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::model::{enumerate_buffers, SystemModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HfgtError {
    #[error("capability \"{capability}\" has a flow at \"{resource}\", which is not a buffer")]
    FlowAtTransportation {
        capability: String,
        resource: String,
    },
    #[error("capability \"{capability}\" references unknown {kind} \"{id}\"")]
    UnknownReference {
        capability: String,
        kind: &'static str,
        id: String,
    },
    #[error("tensors were built from different models ({0})")]
    DimensionMismatch(String),
    #[error("A not square ({rows} rows, {cols} columns)")]
    NotSquare { rows: usize, cols: usize },
    #[error("partition expects a reduced matrix")]
    NotReduced,
    #[error("no row for {operand} @ {buffer}")]
    MissingPlace { operand: String, buffer: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Negative,
    Positive,
}

/// An (operand, buffer) pair: a row of the incidence matrix and a place of
/// the engineering system net.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Place {
    pub operand: String,
    pub buffer: String,
}

impl Place {
    pub fn new(operand: impl Into<String>, buffer: impl Into<String>) -> Self {
        Place {
            operand: operand.into(),
            buffer: buffer.into(),
        }
    }
}

impl std::fmt::Display for Place {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} @ {}", self.operand, self.buffer)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceTensor {
    pub sign: Sign,
    pub operands: Vec<String>,
    pub buffers: Vec<String>,
    pub capabilities: Vec<String>,
    /// (operand, buffer, capability) → weight > 0
    pub entries: BTreeMap<(usize, usize, usize), f64>,
}

impl IncidenceTensor {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.operands.len(), self.buffers.len(), self.capabilities.len())
    }

    pub fn get(&self, operand: usize, buffer: usize, capability: usize) -> f64 {
        self.entries
            .get(&(operand, buffer, capability))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Build the negative (pull) or positive (inject) tensor. Weights are the
/// magnitudes of the declared flow rates of matching sign.
pub fn build_hfit(model: &SystemModel, sign: Sign) -> Result<IncidenceTensor, HfgtError> {
    let buffers: Vec<String> = enumerate_buffers(model).iter().map(|b| b.id.clone()).collect();
    let mut entries = BTreeMap::new();
    for (psi, cap) in model.capabilities.iter().enumerate() {
        for flow in &cap.flows {
            let i = model
                .operand_index(&flow.operand)
                .ok_or_else(|| HfgtError::UnknownReference {
                    capability: cap.id.clone(),
                    kind: "operand",
                    id: flow.operand.clone(),
                })?;
            let y = match buffers.iter().position(|b| *b == flow.buffer) {
                Some(y) => y,
                None if model.resource(&flow.buffer).is_some() => {
                    return Err(HfgtError::FlowAtTransportation {
                        capability: cap.id.clone(),
                        resource: flow.buffer.clone(),
                    })
                }
                None => {
                    return Err(HfgtError::UnknownReference {
                        capability: cap.id.clone(),
                        kind: "buffer",
                        id: flow.buffer.clone(),
                    })
                }
            };
            let matches = match sign {
                Sign::Negative => flow.rate < 0.0,
                Sign::Positive => flow.rate > 0.0,
            };
            if matches {
                *entries.entry((i, y, psi)).or_insert(0.0) += flow.rate.abs();
            }
        }
    }
    Ok(IncidenceTensor {
        sign,
        operands: model.operands.iter().map(|o| o.id.clone()).collect(),
        buffers,
        capabilities: model.capabilities.iter().map(|c| c.id.clone()).collect(),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidenceMatrix {
    pub values: Matrix,
    pub row_map: Vec<Place>,
    pub col_map: Vec<String>,
    pub reduced: bool,
}

impl IncidenceMatrix {
    pub fn row_of(&self, place: &Place) -> Option<usize> {
        self.row_map.iter().position(|p| p == place)
    }

    pub fn col_of(&self, capability: &str) -> Option<usize> {
        self.col_map.iter().position(|c| c == capability)
    }

    /// CSV: `operand,buffer,<capability ids...>`, one row per place.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["operand".to_string(), "buffer".to_string()];
        header.extend(self.col_map.iter().cloned());
        w.write_record(&header)?;
        for (i, place) in self.row_map.iter().enumerate() {
            let mut rec = vec![place.operand.clone(), place.buffer.clone()];
            rec.extend(self.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "reduced": self.reduced,
            "row_map": self.row_map,
            "col_map": self.col_map,
            "values": self.values.to_rows(),
        })
    }
}

fn place_rows(tensor: &IncidenceTensor) -> Vec<Place> {
    let mut rows = Vec::with_capacity(tensor.operands.len() * tensor.buffers.len());
    for o in &tensor.operands {
        for b in &tensor.buffers {
            rows.push(Place::new(o.clone(), b.clone()));
        }
    }
    rows
}

/// Flatten one tensor into a |L||B_S| × |E_S| matrix, rows operand-major.
pub fn matricize_tensor(tensor: &IncidenceTensor) -> IncidenceMatrix {
    let (nl, nb, ne) = tensor.dims();
    let mut values = Matrix::zeros(nl * nb, ne);
    for (&(i, y, psi), &w) in &tensor.entries {
        values[(i * nb + y, psi)] = w;
    }
    IncidenceMatrix {
        values,
        row_map: place_rows(tensor),
        col_map: tensor.capabilities.clone(),
        reduced: false,
    }
}

/// `M = M⁺ − M⁻` over the full |L||B_S| × |E_S| grid.
pub fn matricize(
    neg: &IncidenceTensor,
    pos: &IncidenceTensor,
) -> Result<IncidenceMatrix, HfgtError> {
    if neg.sign != Sign::Negative || pos.sign != Sign::Positive {
        return Err(HfgtError::DimensionMismatch(
            "expected one negative and one positive tensor".into(),
        ));
    }
    if neg.operands != pos.operands || neg.buffers != pos.buffers || neg.capabilities != pos.capabilities
    {
        return Err(HfgtError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            neg.dims(),
            pos.dims()
        )));
    }
    let plus = matricize_tensor(pos);
    let minus = matricize_tensor(neg);
    let mut values = plus.values.clone();
    for i in 0..values.rows() {
        for j in 0..values.cols() {
            values[(i, j)] = plus.values[(i, j)] - minus.values[(i, j)];
        }
    }
    Ok(IncidenceMatrix {
        values,
        row_map: plus.row_map,
        col_map: plus.col_map,
        reduced: false,
    })
}

/// Drop every all-zero row; the column count is unchanged.
pub fn eliminate_zero_rows(m: &IncidenceMatrix) -> IncidenceMatrix {
    let keep: Vec<usize> = (0..m.values.rows())
        .filter(|&i| !m.values.is_row_zero(i))
        .collect();
    IncidenceMatrix {
        values: m.values.select_rows(&keep),
        row_map: keep.iter().map(|&i| m.row_map[i].clone()).collect(),
        col_map: m.col_map.clone(),
        reduced: true,
    }
}

/// Reduced incidence matrix of a model in one call.
pub fn reduced_incidence(model: &SystemModel) -> Result<IncidenceMatrix, HfgtError> {
    let neg = build_hfit(model, Sign::Negative)?;
    let pos = build_hfit(model, Sign::Positive)?;
    Ok(eliminate_zero_rows(&matricize(&neg, &pos)?))
}

/// Product block `A` (square) and environmental-aspect block `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedMatrix {
    pub a: Matrix,
    pub b: Matrix,
    /// Row indices into the reduced matrix, in order.
    pub product_rows: Vec<usize>,
    pub aspect_rows: Vec<usize>,
    pub product_places: Vec<Place>,
    pub aspect_places: Vec<Place>,
    pub col_map: Vec<String>,
}

impl PartitionedMatrix {
    /// Build directly from blocks; places are named `y<i>` / `e<i>`.
    pub fn from_blocks(a: Matrix, b: Matrix) -> Result<Self, HfgtError> {
        if !a.is_square() {
            return Err(HfgtError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        if b.cols() != a.cols() {
            return Err(HfgtError::DimensionMismatch(format!(
                "A has {} columns, B has {}",
                a.cols(),
                b.cols()
            )));
        }
        let n = a.rows();
        let m = b.rows();
        Ok(PartitionedMatrix {
            product_rows: (0..n).collect(),
            aspect_rows: (n..n + m).collect(),
            product_places: (0..n).map(|i| Place::new(format!("y{i}"), "net")).collect(),
            aspect_places: (0..m).map(|i| Place::new(format!("e{i}"), "net")).collect(),
            col_map: (0..n).map(|j| format!("t{j}")).collect(),
            a,
            b,
        })
    }

    pub fn product_index(&self, place: &Place) -> Option<usize> {
        self.product_places.iter().position(|p| p == place)
    }

    pub fn aspect_index(&self, place: &Place) -> Option<usize> {
        self.aspect_places.iter().position(|p| p == place)
    }

    pub fn col_of(&self, capability: &str) -> Option<usize> {
        self.col_map.iter().position(|c| c == capability)
    }

    /// Stack A over B back into reduced-matrix row order.
    pub fn reassemble(&self) -> Matrix {
        let total = self.product_rows.len() + self.aspect_rows.len();
        let mut rows = vec![Vec::new(); total];
        for (k, &r) in self.product_rows.iter().enumerate() {
            rows[r] = self.a.row(k).to_vec();
        }
        for (k, &r) in self.aspect_rows.iter().enumerate() {
            rows[r] = self.b.row(k).to_vec();
        }
        if rows.is_empty() {
            return Matrix::with_cols(self.col_map.len());
        }
        Matrix::from_rows(&rows)
    }
}

/// Split a reduced matrix into product rows (operands not in `aspects`) and
/// aspect rows, keeping row order. The product block must be square.
pub fn partition<S: AsRef<str>>(
    m: &IncidenceMatrix,
    aspects: &[S],
) -> Result<PartitionedMatrix, HfgtError> {
    if !m.reduced {
        return Err(HfgtError::NotReduced);
    }
    let aspects: BTreeSet<&str> = aspects.iter().map(|s| s.as_ref()).collect();
    let (aspect_rows, product_rows): (Vec<usize>, Vec<usize>) = (0..m.row_map.len())
        .partition(|&i| aspects.contains(m.row_map[i].operand.as_str()));
    if product_rows.len() != m.col_map.len() {
        return Err(HfgtError::NotSquare {
            rows: product_rows.len(),
            cols: m.col_map.len(),
        });
    }
    Ok(PartitionedMatrix {
        a: m.values.select_rows(&product_rows),
        b: m.values.select_rows(&aspect_rows),
        product_places: product_rows.iter().map(|&i| m.row_map[i].clone()).collect(),
        aspect_places: aspect_rows.iter().map(|&i| m.row_map[i].clone()).collect(),
        product_rows,
        aspect_rows,
        col_map: m.col_map.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_system_model;

    fn australia() -> SystemModel {
        SystemModel::australia_h2()
    }

    #[test]
    fn electrolyzer_tensor_entries() {
        let m = australia();
        let neg = build_hfit(&m, Sign::Negative).unwrap();
        let pos = build_hfit(&m, Sign::Positive).unwrap();
        let elec = m.operand_index("electricity").unwrap();
        let h2 = m.operand_index("hydrogen").unwrap();
        let elz = m.buffer_index("electrolyzer").unwrap();
        let col = m.capability_index("pem_electrolysis").unwrap();
        assert_eq!(col, 12);
        assert_eq!(neg.get(elec, elz, col), 52.5);
        assert_eq!(pos.get(h2, elz, col), 1.0);
        assert_eq!(pos.get(elec, elz, col), 0.0);
        assert!(neg.entries.values().chain(pos.entries.values()).all(|&w| w > 0.0));
    }

    #[test]
    fn empty_model_has_empty_tensor() {
        let m = parse_system_model("[operands]\ne | E | kWh\n").unwrap();
        assert!(build_hfit(&m, Sign::Negative).unwrap().is_empty());
        assert!(build_hfit(&m, Sign::Positive).unwrap().is_empty());
    }

    #[test]
    fn flow_at_transportation_resource_is_an_error() {
        let doc = "\
[operands]
e | E | kWh
[processes]
move | Move | refined-transportation
[resources]
line | Line | transportation
[capabilities]
line_move | line | move | e @ line : 1 kWh
";
        let m = parse_system_model(doc).unwrap();
        assert!(matches!(
            build_hfit(&m, Sign::Positive),
            Err(HfgtError::FlowAtTransportation { .. })
        ));
    }

    #[test]
    fn matricized_values() {
        let m = australia();
        let neg = build_hfit(&m, Sign::Negative).unwrap();
        let pos = build_hfit(&m, Sign::Positive).unwrap();
        let full = matricize(&neg, &pos).unwrap();
        assert_eq!(full.values.rows(), 14 * 11);
        assert_eq!(full.values.cols(), 13);
        assert!(!full.reduced);
        let coal = full.row_of(&Place::new("coal", "coal_plant")).unwrap();
        assert_eq!(full.values[(coal, 0)], -4.6);
        let heat = full.row_of(&Place::new("heat_loss", "substation")).unwrap();
        assert_eq!(full.values[(heat, 0)], 30.3);
        let unused = full.row_of(&Place::new("wind_energy", "battery")).unwrap();
        assert!(full.values.is_row_zero(unused));
        // operand-major ordering
        assert_eq!(full.row_map[0], Place::new("coal", "coal_plant"));
        assert_eq!(full.row_map[1], Place::new("coal", "ng_plant"));
        assert_eq!(full.row_map[11], Place::new("processed_ng", "coal_plant"));
    }

    #[test]
    fn matricize_rejects_foreign_tensors() {
        let a = build_hfit(&australia(), Sign::Negative).unwrap();
        let other = parse_system_model(
            "[operands]\ne | E | kWh\n[processes]\ng | G | transformation\n[resources]\np | P | transformation\n[capabilities]\nc | p | g | e @ p : 1 kWh\n",
        )
        .unwrap();
        let b = build_hfit(&other, Sign::Positive).unwrap();
        assert!(matches!(matricize(&a, &b), Err(HfgtError::DimensionMismatch(_))));
        assert!(matches!(matricize(&b, &a), Err(HfgtError::DimensionMismatch(_))));
    }

    #[test]
    fn australia_reduces_to_twenty_rows() {
        let r = reduced_incidence(&australia()).unwrap();
        assert_eq!(r.values.rows(), 20);
        assert_eq!(r.row_map.len(), 20);
        assert_eq!(r.values.cols(), 13);
        assert!(r.reduced);
    }

    #[test]
    fn elimination_edge_cases() {
        let dense = IncidenceMatrix {
            values: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -2.0]]),
            row_map: vec![Place::new("a", "x"), Place::new("b", "x")],
            col_map: vec!["c1".into(), "c2".into()],
            reduced: false,
        };
        let r = eliminate_zero_rows(&dense);
        assert_eq!(r.values, dense.values);
        assert_eq!(r.row_map, dense.row_map);
        assert!(r.reduced);

        let zero = IncidenceMatrix {
            values: Matrix::zeros(3, 2),
            row_map: vec![Place::new("a", "x"); 3],
            col_map: vec!["c1".into(), "c2".into()],
            reduced: false,
        };
        let r = eliminate_zero_rows(&zero);
        assert_eq!(r.values.rows(), 0);
        assert_eq!(r.values.cols(), 2);
        assert!(r.row_map.is_empty());
    }

    #[test]
    fn displayed_aspect_set_is_not_square() {
        let r = reduced_incidence(&australia()).unwrap();
        let err = partition(&r, &["heat_loss", "co2", "oxygen"]).unwrap_err();
        assert_eq!(err, HfgtError::NotSquare { rows: 17, cols: 13 });
        assert_eq!(err.to_string(), "A not square (17 rows, 13 columns)");
    }

    #[test]
    fn lca_aspect_set_is_square() {
        let m = australia();
        let aspects: Vec<&str> = m.metadata["lca.aspects"].split(',').map(str::trim).collect();
        let r = reduced_incidence(&m).unwrap();
        let p = partition(&r, &aspects).unwrap();
        assert_eq!((p.a.rows(), p.a.cols()), (13, 13));
        assert_eq!(p.b.rows(), 7);
        assert_eq!(p.reassemble(), r.values);
    }

    #[test]
    fn toy_partition_and_empty_aspects() {
        let doc = "\
[operands]
e | Electricity | kWh
h | Hydrogen | kg
co2 | CO2 | kg
[processes]
gen | Generate | transformation
elz | Electrolyze | transformation
[resources]
plant | Plant | transformation
stack | Stack | transformation
[capabilities]
plant_gen | plant | gen | e @ plant : 1 kWh ; co2 @ plant : 0.5 kg
stack_elz | stack | elz | e @ plant : -1 kWh ; h @ stack : 1 kg
";
        let r = reduced_incidence(&parse_system_model(doc).unwrap()).unwrap();
        let p = partition(&r, &["co2"]).unwrap();
        assert_eq!(p.a, Matrix::from_rows(&[vec![1.0, -1.0], vec![0.0, 1.0]]));
        assert_eq!(p.b, Matrix::from_rows(&[vec![0.5, 0.0]]));

        let none: [&str; 0] = [];
        assert!(matches!(
            partition(&r, &none),
            Err(HfgtError::NotSquare { rows: 3, cols: 2 })
        ));
        let r2 = reduced_incidence(
            &parse_system_model(&doc.replace(" ; co2 @ plant : 0.5 kg", "")).unwrap(),
        )
        .unwrap();
        let p2 = partition(&r2, &none).unwrap();
        assert_eq!(p2.b.rows(), 0);
        assert_eq!(p2.a, r2.values);
    }

    #[test]
    fn partition_requires_reduced() {
        let m = australia();
        let full = matricize(
            &build_hfit(&m, Sign::Negative).unwrap(),
            &build_hfit(&m, Sign::Positive).unwrap(),
        )
        .unwrap();
        assert_eq!(partition(&full, &["co2"]), Err(HfgtError::NotReduced));
    }

    #[test]
    fn csv_export_layout() {
        let r = reduced_incidence(&australia()).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines
            .next()
            .unwrap()
            .starts_with("operand,buffer,coal_gen,ng_gen,"));
        assert_eq!(
            lines.next().unwrap(),
            "coal,coal_plant,-4.6,0,0,0,0,0,0,0,0,0,0,0,0"
        );
        assert_eq!(text.lines().count(), 21);
        let json = r.to_json();
        assert_eq!(json["row_map"].as_array().unwrap().len(), 20);
        assert_eq!(json["col_map"][12], "pem_electrolysis");
    }
}
