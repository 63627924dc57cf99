//! Token-level mask mutation and the infilling-mutator client side.

pub mod lexer;
pub mod mask;
pub mod mock;
pub mod remote;

pub use lexer::{tokenize, Token, TokenKind, TokenStream};
pub use mask::{
    apply_fills, mask_insert, mask_mutation, mask_overwrite, mask_splice, MaskBudget, MaskedCase,
    SeedId, Strategy, StrategyMix,
};
pub use mock::MockMutator;
pub use remote::{serve, serve_connection, RemoteMutator, ResilientMutator};

use crate::error::{CovrlError, Result};
use crate::protocol::{DecodeOptions, FinetuneReport, FinetuneRequest, InfillRequest};

/// An infilling mutator endpoint. Requests are issued one at a time.
pub trait Mutator {
    /// Returns one token sequence per requested slot.
    fn infill(&mut self, req: &InfillRequest) -> Result<Vec<Vec<String>>>;

    fn finetune(&mut self, req: &FinetuneRequest) -> Result<FinetuneReport>;

    fn ping(&mut self) -> Result<String>;

    /// Called at every cycle start.
    fn begin_cycle(&mut self) {}

    /// Opaque resumable state, if the endpoint has any worth checkpointing.
    fn save_state(&self) -> Option<serde_json::Value> {
        None
    }

    fn restore_state(&mut self, _state: &serde_json::Value) -> Result<()> {
        Ok(())
    }
}

/// The fills returned for one masked case, in slot order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FillResult {
    pub fills: Vec<Vec<Token>>,
}

impl FillResult {
    pub fn texts(&self) -> Vec<Vec<String>> {
        self.fills
            .iter()
            .map(|f| f.iter().map(|t| t.text.clone()).collect())
            .collect()
    }
}

/// Asks the mutator to fill every slot of `mc`. A reply with the wrong number
/// of fills is a protocol error.
pub fn request_fill(
    mc: &MaskedCase,
    mutator: &mut dyn Mutator,
    decode: DecodeOptions,
    request_id: u64,
) -> Result<FillResult> {
    let req = InfillRequest {
        id: request_id,
        masked_tokens: mc.masked.texts(),
        slots: mc.slots,
        decode,
    };
    let fills = mutator.infill(&req)?;
    if fills.len() != mc.slots {
        return Err(CovrlError::Protocol(format!(
            "request {request_id} asked for {} fills, got {}",
            mc.slots,
            fills.len()
        )));
    }
    Ok(FillResult {
        fills: fills
            .iter()
            .map(|f| TokenStream::from_texts(f).into_tokens())
            .collect(),
    })
}
