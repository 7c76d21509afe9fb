use super::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Sample>,
    pub feature_dim: usize,
}

impl Dataset {
    pub fn check_labels(&self, classes: usize) -> Result<(), ModelError> {
        for (row, s) in self.rows.iter().enumerate() {
            if let Some(label) = s.label {
                if label >= classes {
                    return Err(ModelError::LabelOutOfRange { row, label, classes });
                }
            }
        }
        Ok(())
    }
}

/// Parses header-free CSV, one sample per row. With `has_label` the last
/// column is a non-negative integer class id.
pub fn parse_dataset(source: &str, has_label: bool) -> Result<Dataset, ModelError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source.as_bytes());
    let mut rows = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| ModelError::FormatError {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(ModelError::RaggedRows(line));
        }
        let n_features = if has_label { w.saturating_sub(1) } else { w };
        if n_features == 0 {
            return Err(ModelError::NonNumericCell { line, col: 1 });
        }
        let mut features = Vec::with_capacity(n_features);
        for (col, cell) in record.iter().take(n_features).enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => features.push(v),
                _ => return Err(ModelError::NonNumericCell { line, col: col + 1 }),
            }
        }
        let label = if has_label {
            let cell = &record[w - 1];
            Some(cell.parse::<usize>().map_err(|_| ModelError::NonNumericCell { line, col: w })?)
        } else {
            None
        };
        rows.push(Sample { features, label });
    }
    match width {
        None => Err(ModelError::EmptyFile),
        Some(_) => {
            let feature_dim = rows[0].features.len();
            Ok(Dataset { rows, feature_dim })
        }
    }
}
