//! On-chain `TokenRegistered` events from the exchange contracts. These
//! bind an outcome-token pair to a condition id and are the fallback
//! discovery path when metadata never arrives through the API.

use serde::{Deserialize, Serialize};

use crate::fill::SourceContract;
use crate::ids::{Hash32, TokenId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRegistration {
    pub token0: TokenId,
    pub token1: TokenId,
    pub condition_id: Hash32,
    pub source_contract: SourceContract,
    pub block_number: u64,
    pub tx_hash: Hash32,
    pub log_index: u64,
}

impl TokenRegistration {
    pub fn key(&self) -> (Hash32, u64) {
        (self.tx_hash, self.log_index)
    }

    pub fn contains(&self, token: &TokenId) -> bool {
        self.token0 == *token || self.token1 == *token
    }
}
