use serde::{Deserialize, Serialize};

/// Separator between a source document id and a chunk or block suffix.
pub(crate) const ID_SEPARATOR: char = '#';

/// One input text, or one chunk of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub ordinal: usize,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, ordinal: usize) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            ordinal,
        }
    }

    /// Id of the source document this chunk belongs to.
    pub fn source_id(&self) -> &str {
        self.id
            .split_once(ID_SEPARATOR)
            .map_or(self.id.as_str(), |(head, _)| head)
    }
}

/// Splits every document into chunks of at most `max_chars` characters.
///
/// Chunks get ids `<id>#c<n>` and contiguous ordinals. A document that fits in
/// one chunk keeps its id.
pub fn chunk_documents(documents: &[Document], max_chars: usize) -> Vec<Document> {
    assert!(max_chars > 0, "chunk size must be positive");
    let mut out = Vec::new();
    for doc in documents {
        let chars: Vec<char> = doc.text.chars().collect();
        if chars.len() <= max_chars {
            out.push(Document::new(doc.id.clone(), doc.text.clone(), out.len()));
            continue;
        }
        for (n, piece) in chars.chunks(max_chars).enumerate() {
            let id = format!("{}{ID_SEPARATOR}c{n}", doc.id);
            out.push(Document::new(
                id,
                piece.iter().collect::<String>(),
                out.len(),
            ));
        }
    }
    out
}
