//! Versioned JSON persistence for trained models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cpd, DbnModel, ModelMetadata, StructureVariant};
use crate::error::{Error, Result};
use crate::eventlog::Vocabularies;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CpdTables {
    initial_h: Vec<f64>,
    background_emit: Cpd,
    event_emit: Cpd,
    symptom_emit: Cpd,
    transition: Cpd,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    variant: StructureVariant,
    hidden_states: usize,
    vocabularies: Vocabularies,
    cpds: CpdTables,
    metadata: ModelMetadata,
}

/// Serialize a model to the versioned JSON document. Stable: serializing
/// the result of a round-trip yields identical bytes.
pub fn model_to_json(model: &DbnModel) -> Result<String> {
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        variant: model.variant,
        hidden_states: model.hidden_states,
        vocabularies: model.vocabs.clone(),
        cpds: CpdTables {
            initial_h: model.initial_h.clone(),
            background_emit: model.background_emit.clone(),
            event_emit: model.event_emit.clone(),
            symptom_emit: model.symptom_emit.clone(),
            transition: model.transition.clone(),
        },
        metadata: model.metadata.clone(),
    };
    serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Format(format!("model serialization failed: {e}")))
}

/// Parse and validate a model from its JSON document.
pub fn model_from_json(json: &str) -> Result<DbnModel> {
    let file: ModelFile = serde_json::from_str(json)
        .map_err(|e| Error::Format(format!("model deserialization failed: {e}")))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported model format_version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let model = DbnModel {
        variant: file.variant,
        hidden_states: file.hidden_states,
        vocabs: file.vocabularies,
        initial_h: file.cpds.initial_h,
        background_emit: file.cpds.background_emit,
        event_emit: file.cpds.event_emit,
        symptom_emit: file.cpds.symptom_emit,
        transition: file.cpds.transition,
        metadata: file.metadata,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &DbnModel, path: &Path) -> Result<()> {
    let json = model_to_json(model)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<DbnModel> {
    let json = std::fs::read_to_string(path)?;
    model_from_json(&json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dbn::init_model;
    use crate::testutil::vocabs_for;

    #[test]
    fn round_trip_preserves_the_model_exactly() {
        let vocabs = vocabs_for(3, Some(2), Some(2));
        let mut model = init_model(StructureVariant::Full, 3, &vocabs, 99).unwrap();
        model.metadata.em_iterations = 17;
        model.metadata.final_log_likelihood = Some(-123.456);
        let json = model_to_json(&model).unwrap();
        let back = model_from_json(&json).unwrap();
        assert_eq!(back, model);
        // Stability: a second serialization is byte-identical.
        assert_eq!(model_to_json(&back).unwrap(), json);
    }

    #[test]
    fn document_carries_version_and_plain_vocabulary_lists() {
        let vocabs = vocabs_for(2, Some(1), None);
        let model = init_model(StructureVariant::Background, 2, &vocabs, 7).unwrap();
        let json = model_to_json(&model).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(doc["format_version"], 1);
        assert_eq!(doc["variant"], "background");
        assert_eq!(doc["vocabularies"]["activity"][0], "e0");
        assert_eq!(doc["vocabularies"]["background"]["attribute"], "bg");
        assert_eq!(doc["vocabularies"]["background"]["values"][0], "b0");
        assert!(doc["vocabularies"]["symptom"].is_null());
        assert!(doc["cpds"]["transition"].is_array());
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let vocabs = vocabs_for(2, None, None);
        let model = init_model(StructureVariant::Pfa, 1, &vocabs, 1).unwrap();
        let json = model_to_json(&model).unwrap().replace(
            "\"format_version\": 1",
            "\"format_version\": 2",
        );
        assert!(matches!(model_from_json(&json), Err(Error::Format(_))));
    }

    #[test]
    fn corrupt_tables_are_rejected_on_load() {
        let vocabs = vocabs_for(2, None, None);
        let model = init_model(StructureVariant::Pfa, 2, &vocabs, 1).unwrap();
        let json = model_to_json(&model).unwrap();
        // Damage one probability so a row no longer sums to 1.
        let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        let mut doc = doc;
        doc["cpds"]["initial_h"][0] = serde_json::json!(0.9999);
        doc["cpds"]["initial_h"][1] = serde_json::json!(0.0002);
        let damaged = serde_json::to_string(&doc).unwrap();
        assert!(matches!(model_from_json(&damaged), Err(Error::Format(_))));
    }
}
