use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::DatasetError;

/// Label reserved for predictions that could not be mapped to a mode.
pub const INVALID_LABEL: &str = "INVALID";

/// Upper-case, whitespace-trimmed form used for every mode label.
pub fn canonical_mode(raw: &str) -> String {
    raw.trim().to_uppercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeGroup {
    Socio,
    TripNum,
    TripCat,
    Additional,
}

impl AttributeGroup {
    pub const ALL: [AttributeGroup; 4] = [
        AttributeGroup::Socio,
        AttributeGroup::TripNum,
        AttributeGroup::TripCat,
        AttributeGroup::Additional,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Ordinal,
    Nominal,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub group: AttributeGroup,
    pub kind: AttributeKind,
    #[serde(default)]
    pub unit: String,
    /// Permitted levels for ordinal (in order) and nominal attributes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    /// Human-readable name used in narratives; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Mode this attribute describes (e.g. a per-alternative travel time).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative: Option<String>,
}

impl Attribute {
    pub fn display_label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, AttributeKind::Ordinal | AttributeKind::Nominal)
    }

    pub fn level_index(&self, raw: &str) -> Option<usize> {
        let raw = raw.trim();
        self.levels.iter().position(|l| l == raw)
    }
}

fn default_choice_column() -> String {
    "choice".to_string()
}

/// Declares the variables of a survey dataset and how they are grouped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub attributes: Vec<Attribute>,
    pub mode_labels: Vec<String>,
    /// Column listing the available modes, separated by `|` or `;`. When
    /// absent every mode is available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub availability_column: Option<String>,
    #[serde(default = "default_choice_column")]
    pub choice_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub respondent_column: Option<String>,
}

impl AttributeSchema {
    /// Checks the structural invariants. Continuous attributes form the
    /// numeric trip vector, so they must live in the `trip_num` group and
    /// that group may hold nothing else.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let err = |msg: String| Err(DatasetError::Schema(msg));

        if self.mode_labels.is_empty() {
            return err("mode_labels must not be empty".into());
        }
        let mut modes = HashSet::new();
        for mode in &self.mode_labels {
            if mode.is_empty() || *mode != canonical_mode(mode) {
                return err(format!("mode label `{mode}` is not upper-case canonical"));
            }
            if mode == INVALID_LABEL {
                return err(format!("`{INVALID_LABEL}` is reserved and cannot be a mode"));
            }
            if !modes.insert(mode.as_str()) {
                return err(format!("duplicate mode label `{mode}`"));
            }
        }

        let mut names = HashSet::new();
        for special in self.special_columns() {
            if !names.insert(special) {
                return err(format!("column `{special}` is used for two roles"));
            }
        }
        for attr in &self.attributes {
            if attr.name.trim().is_empty() {
                return err("attribute with empty name".into());
            }
            if !names.insert(attr.name.as_str()) {
                return err(format!("duplicate column name `{}`", attr.name));
            }
            match attr.kind {
                AttributeKind::Continuous => {
                    if attr.group != AttributeGroup::TripNum {
                        return err(format!(
                            "continuous attribute `{}` must be in group trip_num",
                            attr.name
                        ));
                    }
                    if !attr.levels.is_empty() {
                        return err(format!(
                            "continuous attribute `{}` cannot declare levels",
                            attr.name
                        ));
                    }
                }
                AttributeKind::Ordinal | AttributeKind::Nominal => {
                    if attr.group == AttributeGroup::TripNum {
                        return err(format!(
                            "group trip_num only holds continuous attributes, `{}` is categorical",
                            attr.name
                        ));
                    }
                    if attr.levels.is_empty() {
                        return err(format!("attribute `{}` must enumerate its levels", attr.name));
                    }
                    let mut seen = HashSet::new();
                    for level in &attr.levels {
                        if level.trim() != level || level.is_empty() {
                            return err(format!(
                                "attribute `{}` has an empty or padded level `{level}`",
                                attr.name
                            ));
                        }
                        if !seen.insert(level) {
                            return err(format!(
                                "attribute `{}` repeats level `{level}`",
                                attr.name
                            ));
                        }
                    }
                }
            }
            if let Some(alt) = &attr.alternative {
                if !modes.contains(alt.as_str()) {
                    return err(format!(
                        "attribute `{}` refers to unknown alternative `{alt}`",
                        attr.name
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn group(&self, group: AttributeGroup) -> impl Iterator<Item = &Attribute> {
        self.attributes.iter().filter(move |a| a.group == group)
    }

    pub fn mode_index(&self, mode: &str) -> Option<usize> {
        self.mode_labels.iter().position(|m| m == mode)
    }

    /// Non-attribute columns in header order.
    pub(crate) fn special_columns(&self) -> Vec<&str> {
        let mut cols = Vec::new();
        if let Some(c) = &self.id_column {
            cols.push(c.as_str());
        }
        if let Some(c) = &self.respondent_column {
            cols.push(c.as_str());
        }
        if let Some(c) = &self.availability_column {
            cols.push(c.as_str());
        }
        cols.push(self.choice_column.as_str());
        cols
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr(name: &str, group: AttributeGroup, kind: AttributeKind, levels: &[&str]) -> Attribute {
        Attribute {
            name: name.into(),
            group,
            kind,
            unit: String::new(),
            levels: levels.iter().map(|s| s.to_string()).collect(),
            label: None,
            alternative: None,
        }
    }

    fn schema(attributes: Vec<Attribute>) -> AttributeSchema {
        AttributeSchema {
            attributes,
            mode_labels: vec!["TRAIN".into(), "CAR".into()],
            availability_column: None,
            choice_column: "choice".into(),
            id_column: None,
            respondent_column: None,
        }
    }

    #[test]
    fn accepts_well_formed_schema() {
        let s = schema(vec![
            attr("age", AttributeGroup::Socio, AttributeKind::Ordinal, &["young", "old"]),
            attr("tt", AttributeGroup::TripNum, AttributeKind::Continuous, &[]),
        ]);
        s.validate().unwrap();
    }

    #[test]
    fn rejects_duplicate_names_and_missing_levels() {
        let s = schema(vec![
            attr("age", AttributeGroup::Socio, AttributeKind::Ordinal, &["a"]),
            attr("age", AttributeGroup::Socio, AttributeKind::Ordinal, &["a"]),
        ]);
        assert!(s.validate().is_err());
        let s = schema(vec![attr("purpose", AttributeGroup::TripCat, AttributeKind::Nominal, &[])]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn rejects_non_canonical_and_reserved_modes() {
        let mut s = schema(vec![]);
        s.mode_labels = vec!["Train".into()];
        assert!(s.validate().is_err());
        s.mode_labels = vec![INVALID_LABEL.into()];
        assert!(s.validate().is_err());
        s.mode_labels = vec![];
        assert!(s.validate().is_err());
    }

    #[test]
    fn rejects_misplaced_continuous_attribute() {
        let s = schema(vec![attr("income", AttributeGroup::Socio, AttributeKind::Continuous, &[])]);
        assert!(s.validate().is_err());
        let s = schema(vec![attr("x", AttributeGroup::TripNum, AttributeKind::Nominal, &["a"])]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn canonical_mode_trims_and_uppercases() {
        assert_eq!(canonical_mode("  sm "), "SM");
    }
}
