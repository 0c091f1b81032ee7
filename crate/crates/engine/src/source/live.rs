//! Interface stubs for the live upstream endpoints (metadata HTTP API
//! and chain RPC). They implement the same pull interface as the
//! simulator and fixtures but require network access and credentials,
//! so every call reports the source as unavailable. Selected only when
//! the configuration names the `live` source kind; excluded from the
//! default test suite.

use chrono::{DateTime, Utc};

use polyflow_core::TokenRegistration;

use super::{DataSource, FillScan, MarketBatch, OracleBatch, SourceCursor, SourceError};

/// Endpoint configuration for the live adapters. Addresses identify the
/// historical exchange and oracle/adapter deployments to scan.
#[derive(Debug, Clone, Default)]
pub struct LiveEndpoints {
    pub metadata_api_url: String,
    pub chain_rpc_url: String,
    pub fill_exchanges: Vec<String>,
    pub oracle_adapters: Vec<String>,
}

pub struct LiveSource {
    endpoints: LiveEndpoints,
}

impl LiveSource {
    pub fn new(endpoints: LiveEndpoints) -> Self {
        Self { endpoints }
    }

    fn unavailable(&self, what: &str) -> SourceError {
        SourceError::Unavailable(format!(
            "live adapter ({what}) needs network access and credentials; \
             endpoints configured: api={}, rpc={}",
            self.endpoints.metadata_api_url, self.endpoints.chain_rpc_url
        ))
    }
}

impl DataSource for LiveSource {
    fn head_block(&self) -> Result<u64, SourceError> {
        Err(self.unavailable("head"))
    }

    fn poll_markets(&self, _cursor: SourceCursor) -> Result<MarketBatch, SourceError> {
        Err(self.unavailable("metadata api"))
    }

    fn poll_fills(&self, _from_block: u64, _to_block: u64) -> Result<FillScan, SourceError> {
        Err(self.unavailable("fill logs"))
    }

    fn poll_oracle_events(&self, _cursor: SourceCursor) -> Result<OracleBatch, SourceError> {
        Err(self.unavailable("oracle logs"))
    }

    fn scan_token_registrations(
        &self,
        _from_block: u64,
        _to_block: u64,
    ) -> Result<Vec<TokenRegistration>, SourceError> {
        Err(self.unavailable("token registrations"))
    }

    fn block_timestamp(&self, _block: u64) -> Result<DateTime<Utc>, SourceError> {
        Err(self.unavailable("block header"))
    }
}
