//! Instruction texts sent with each extraction request.

use serde::{Deserialize, Serialize};

/// Instructions per pipeline step. Any field can be overridden from config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Prompts {
    pub distill: String,
    pub entities: String,
    pub local_relations: String,
    pub global_relations: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Self {
            distill: "You rewrite a document into a structured summary. Fill in the \
                      requested keys using only information stated in the document. \
                      Do not invent values."
                .into(),
            entities: "Extract the entities mentioned in the text. Each entity must name \
                       exactly one concept; split compound mentions into separate entities. \
                       Give each entity a short category label."
                .into(),
            local_relations: "Extract relations stated directly in the text. Use only the \
                              listed entities as subject and object, written exactly as \
                              listed. Use a short verb phrase as the predicate."
                .into(),
            global_relations: "Extract relations stated or implied by the text. Use only the \
                               listed entities as subject and object, written exactly as \
                               listed; entities not mentioned in the text may be used when \
                               the text implies a relation to them. Use a short verb \
                               phrase as the predicate."
                .into(),
        }
    }
}
