use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::schema::{canonical_mode, AttributeKind, AttributeSchema};
use super::{ChoiceInstance, DatasetError, Value};

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// Tokens read as a missing value, compared after trimming.
    pub missing_tokens: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            missing_tokens: vec![String::new(), "NA".to_string()],
        }
    }
}

impl LoadOptions {
    fn is_missing(&self, raw: &str) -> bool {
        let raw = raw.trim();
        self.missing_tokens.iter().any(|t| t == raw)
    }
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    schema: &AttributeSchema,
    options: &LoadOptions,
) -> Result<Vec<ChoiceInstance>, DatasetError> {
    let file = File::open(path)?;
    read_dataset(file, schema, options)
}

/// Parses delimiter-separated text with a header row. Rows are numbered
/// from 1 (the first data row) in error messages.
pub fn read_dataset<R: Read>(
    reader: R,
    schema: &AttributeSchema,
    options: &LoadOptions,
) -> Result<Vec<ChoiceInstance>, DatasetError> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let mut position: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        let known = schema.attribute(h).is_some() || schema.special_columns().contains(&h);
        if !known {
            return Err(DatasetError::UnknownColumn { column: h.to_string() });
        }
        position.insert(h, i);
    }
    let required = schema
        .attributes
        .iter()
        .map(|a| a.name.as_str())
        .chain(schema.special_columns());
    for col in required {
        if !position.contains_key(col) {
            return Err(DatasetError::MissingColumn { column: col.to_string() });
        }
    }

    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let field = |col: &str| record.get(position[col]).unwrap_or("");

        let mut values = BTreeMap::new();
        for attr in &schema.attributes {
            let raw = field(&attr.name);
            let value = if options.is_missing(raw) {
                Value::Missing
            } else {
                match attr.kind {
                    AttributeKind::Continuous => {
                        let v: f64 = raw.trim().parse().map_err(|_| DatasetError::InvalidValue {
                            row,
                            column: attr.name.clone(),
                            reason: format!("`{raw}` is not a number"),
                        })?;
                        if !v.is_finite() {
                            return Err(DatasetError::InvalidValue {
                                row,
                                column: attr.name.clone(),
                                reason: format!("`{raw}` is not finite"),
                            });
                        }
                        Value::Number(v)
                    }
                    AttributeKind::Ordinal | AttributeKind::Nominal => {
                        let idx = attr.level_index(raw).ok_or_else(|| DatasetError::InvalidValue {
                            row,
                            column: attr.name.clone(),
                            reason: format!(
                                "level `{}` is not one of the declared levels {:?}",
                                raw.trim(),
                                attr.levels
                            ),
                        })?;
                        Value::Level(idx)
                    }
                }
            };
            values.insert(attr.name.clone(), value);
        }

        let available_modes = match &schema.availability_column {
            None => schema.mode_labels.clone(),
            Some(col) => parse_availability(field(col), schema).map_err(|reason| {
                DatasetError::InvalidValue { row, column: col.clone(), reason }
            })?,
        };

        let chosen = canonical_mode(field(&schema.choice_column));
        if schema.mode_index(&chosen).is_none() {
            return Err(DatasetError::InvalidValue {
                row,
                column: schema.choice_column.clone(),
                reason: format!("`{chosen}` is not a declared mode"),
            });
        }
        if !available_modes.contains(&chosen) {
            return Err(DatasetError::ChoiceNotAvailable {
                row,
                column: schema.choice_column.clone(),
                mode: chosen,
            });
        }

        let id = match &schema.id_column {
            Some(col) => field(col).trim().to_string(),
            None => row.to_string(),
        };
        if id.is_empty() {
            return Err(DatasetError::InvalidValue {
                row,
                column: schema.id_column.clone().unwrap_or_default(),
                reason: "empty identifier".into(),
            });
        }
        let respondent = match &schema.respondent_column {
            Some(col) => field(col).trim().to_string(),
            None => id.clone(),
        };

        out.push(ChoiceInstance {
            id,
            respondent,
            values,
            available_modes,
            chosen_mode: chosen,
        });
    }
    Ok(out)
}

fn parse_availability(raw: &str, schema: &AttributeSchema) -> Result<Vec<String>, String> {
    let mut listed = Vec::new();
    for token in raw.split(['|', ';']).map(canonical_mode) {
        if token.is_empty() {
            continue;
        }
        if schema.mode_index(&token).is_none() {
            return Err(format!("unknown mode `{token}` in availability set"));
        }
        listed.push(token);
    }
    if listed.is_empty() {
        return Err("empty availability set".into());
    }
    // Keep schema order regardless of how the file lists them.
    Ok(schema
        .mode_labels
        .iter()
        .filter(|m| listed.contains(m))
        .cloned()
        .collect())
}

/// Writes instances in the layout `read_dataset` accepts. Missing values are
/// written as `NA`.
pub fn write_dataset<W: Write>(
    writer: W,
    instances: &[ChoiceInstance],
    schema: &AttributeSchema,
    options: &LoadOptions,
) -> Result<(), DatasetError> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(options.delimiter)
        .from_writer(writer);

    let mut header: Vec<&str> = Vec::new();
    if let Some(c) = &schema.id_column {
        header.push(c);
    }
    if let Some(c) = &schema.respondent_column {
        header.push(c);
    }
    header.extend(schema.attributes.iter().map(|a| a.name.as_str()));
    if let Some(c) = &schema.availability_column {
        header.push(c);
    }
    header.push(&schema.choice_column);
    wtr.write_record(&header)?;

    for inst in instances {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        if schema.id_column.is_some() {
            row.push(inst.id.clone());
        }
        if schema.respondent_column.is_some() {
            row.push(inst.respondent.clone());
        }
        for attr in &schema.attributes {
            row.push(match inst.value(&attr.name) {
                Value::Missing => "NA".to_string(),
                Value::Number(v) => v.to_string(),
                Value::Level(i) => attr.levels[i].clone(),
            });
        }
        if schema.availability_column.is_some() {
            row.push(inst.available_modes.join("|"));
        }
        row.push(inst.chosen_mode.clone());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
