use hmac::{Hmac, Mac};
use sha2::Sha256;

use crate::detection::PacketRecord;
use crate::error::{Error, Result};

/// HMAC-SHA256 of `id` under `key`, truncated to 8 bytes, lower-case hex.
pub fn anonymize_id(id: &str, key: &[u8]) -> Result<String> {
    if key.is_empty() {
        return Err(Error::Config("anonymization key is empty".into()));
    }
    let mut mac = Hmac::<Sha256>::new_from_slice(key).map_err(|e| Error::Config(e.to_string()))?;
    mac.update(id.as_bytes());
    Ok(hex::encode(&mac.finalize().into_bytes()[..8]))
}

/// Replaces the identifier and link-layer address of every record.
pub fn anonymize_ids(records: Vec<PacketRecord>, key: &[u8]) -> Result<Vec<PacketRecord>> {
    anonymize_id("", key)?;
    records
        .into_iter()
        .map(|mut r| {
            r.identifier = anonymize_id(&r.identifier, key)?;
            if let Some(mac) = r.mac.take() {
                r.mac = Some(anonymize_id(&mac, key)?);
            }
            Ok(r)
        })
        .collect()
}
