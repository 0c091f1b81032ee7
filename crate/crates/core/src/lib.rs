//! Canonical domain model for the prediction-market data engine.
//!
//! Three event layers share these types: market metadata, fill-level
//! trade settlements, and oracle-resolution events. Everything here is
//! a plain value type; all mutation and persistence lives upstream.
//!
//! The canonical on-disk representation is line-delimited JSON (one
//! record per line, UTF-8) with lowercase `0x`-prefixed hex identifiers
//! and ISO-8601 UTC timestamps at seconds precision. See [`ndjson`].

pub mod fill;
pub mod ids;
pub mod market;
pub mod ndjson;
pub mod oracle;
pub mod registration;
pub mod time;

pub use fill::{
    derive_fill_price, ExchangeDirection, FillMeta, FillRecord, PriceError, Side, SourceContract,
    COLLATERAL_BASE_UNITS,
};
pub use ids::{Address, Hash32, IdParseError, TokenId};
pub use market::{validate_market, MarketMetadata, MarketRecord, MarketViolation, Provenance};
pub use oracle::{HexPayload, OracleEvent, OracleEventType};
pub use registration::TokenRegistration;
