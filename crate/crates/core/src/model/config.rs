use crate::error::{ModelError, ModelResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }

    pub fn parse(s: &str) -> ModelResult<Self> {
        match s {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(ModelError::Config { what: format!("unknown cell kind {other:?}") }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    Dot,
    General,
}

impl AttentionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttentionKind::Dot => "dot",
            AttentionKind::General => "general",
        }
    }

    pub fn parse(s: &str) -> ModelResult<Self> {
        match s {
            "dot" => Ok(AttentionKind::Dot),
            "general" => Ok(AttentionKind::General),
            other => {
                Err(ModelError::Config { what: format!("unknown attention kind {other:?}") })
            }
        }
    }
}

/// One auxiliary feature stream: its vocabulary size and embedding width.
/// Factor specs apply symmetrically: feature embeddings are concatenated to
/// the word embedding on both sides, and the generator grows one prediction
/// head per factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactorSpec {
    pub vocab_size: usize,
    pub emb_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub rnn_size: usize,
    pub embedding_dim: usize,
    pub cell: CellKind,
    pub attention: AttentionKind,
    pub input_feed: bool,
    pub dropout_rate: f64,
    pub factors: Vec<FactorSpec>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_layers: 2,
            rnn_size: 500,
            embedding_dim: 300,
            cell: CellKind::Lstm,
            attention: AttentionKind::Dot,
            input_feed: true,
            dropout_rate: 0.0,
            factors: Vec::new(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> ModelResult<()> {
        if self.num_layers == 0 {
            return Err(ModelError::Config { what: "num_layers must be at least 1".into() });
        }
        if self.rnn_size == 0 || self.embedding_dim == 0 {
            return Err(ModelError::Config { what: "dimensions must be positive".into() });
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::Config {
                what: format!("dropout rate {} outside [0, 1)", self.dropout_rate),
            });
        }
        for (i, f) in self.factors.iter().enumerate() {
            if f.vocab_size == 0 || f.emb_dim == 0 {
                return Err(ModelError::Config { what: format!("factor {i} has zero dims") });
            }
        }
        Ok(())
    }

    /// Word embedding plus concatenated factor embeddings.
    pub fn token_repr_dim(&self) -> usize {
        self.embedding_dim + self.factors.iter().map(|f| f.emb_dim).sum::<usize>()
    }

    pub fn encoder_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.token_repr_dim()
        } else {
            self.rnn_size
        }
    }

    pub fn decoder_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.token_repr_dim() + if self.input_feed { self.rnn_size } else { 0 }
        } else {
            self.rnn_size
        }
    }
}
