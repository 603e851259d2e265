//! Keys, the canonical voucher encoding, and voucher signatures.
//!
//! Vouchers are signed with Ed25519, which is deterministic: the same key
//! and message always give the same signature.

use std::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ledger::{Address, ChannelId, Funds};

pub use ed25519_dalek::VerifyingKey as PublicKey;

/// Length of [`encode_voucher`] output.
pub const VOUCHER_MESSAGE_LEN: usize = 40;
pub const SIGNATURE_LEN: usize = 64;
/// Length of a voucher on the wire: message followed by signature.
pub const VOUCHER_WIRE_LEN: usize = VOUCHER_MESSAGE_LEN + SIGNATURE_LEN;

/// 32 bytes of key material from which a key pair is derived.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Seed(pub [u8; 32]);

impl Seed {
    pub fn from_u64(n: u64) -> Seed {
        Seed(Sha256::new().chain_update(b"parkchain/seed").chain_update(n.to_be_bytes()).finalize().into())
    }

    /// Seed for a named actor under a scenario-wide master seed.
    pub fn derive(master: u64, label: &str) -> Seed {
        Seed(
            Sha256::new()
                .chain_update(b"parkchain/actor")
                .chain_update(master.to_be_bytes())
                .chain_update((label.len() as u64).to_be_bytes())
                .chain_update(label.as_bytes())
                .finalize()
                .into(),
        )
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Seed(..)")
    }
}

#[derive(Clone)]
pub struct KeyPair {
    secret: SigningKey,
}

impl KeyPair {
    pub fn from_seed(seed: &Seed) -> KeyPair {
        KeyPair { secret: SigningKey::from_bytes(&seed.0) }
    }

    pub fn public(&self) -> PublicKey {
        self.secret.verifying_key()
    }

    pub fn address(&self) -> Address {
        address_of(&self.public())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("address", &self.address()).finish_non_exhaustive()
    }
}

pub fn address_of(public: &PublicKey) -> Address {
    Address(Sha256::digest(public.as_bytes()).into())
}

/// Canonical voucher message: channel id, then the cumulative amount as
/// 8-byte big-endian.
pub fn encode_voucher(channel_id: &ChannelId, cumulative: Funds) -> [u8; VOUCHER_MESSAGE_LEN] {
    let mut out = [0u8; VOUCHER_MESSAGE_LEN];
    out[..32].copy_from_slice(channel_id.as_bytes());
    out[32..].copy_from_slice(&cumulative.0.to_be_bytes());
    out
}

/// A payer's signed promise that `cumulative` is owed in total on a channel.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Voucher {
    pub channel_id: ChannelId,
    pub cumulative: Funds,
    pub signature: [u8; SIGNATURE_LEN],
}

impl Voucher {
    pub fn message(&self) -> [u8; VOUCHER_MESSAGE_LEN] {
        encode_voucher(&self.channel_id, self.cumulative)
    }

    pub fn to_wire(&self) -> [u8; VOUCHER_WIRE_LEN] {
        let mut out = [0u8; VOUCHER_WIRE_LEN];
        out[..VOUCHER_MESSAGE_LEN].copy_from_slice(&self.message());
        out[VOUCHER_MESSAGE_LEN..].copy_from_slice(&self.signature);
        out
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Voucher> {
        if bytes.len() != VOUCHER_WIRE_LEN {
            return Err(Error::MalformedVoucher("expected 104 bytes"));
        }
        let mut channel = [0u8; 32];
        channel.copy_from_slice(&bytes[..32]);
        let mut amount = [0u8; 8];
        amount.copy_from_slice(&bytes[32..40]);
        let mut signature = [0u8; SIGNATURE_LEN];
        signature.copy_from_slice(&bytes[40..]);
        Ok(Voucher { channel_id: ChannelId(channel), cumulative: Funds(u64::from_be_bytes(amount)), signature })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_wire())
    }

    pub fn from_hex(s: &str) -> Result<Voucher> {
        let bytes = hex::decode(s).map_err(|_| Error::MalformedVoucher("not hex"))?;
        Voucher::from_wire(&bytes)
    }
}

impl fmt::Debug for Voucher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Voucher")
            .field("channel_id", &self.channel_id)
            .field("cumulative", &self.cumulative)
            .finish_non_exhaustive()
    }
}

impl Serialize for Voucher {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Voucher {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Voucher::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

pub fn sign_voucher(keys: &KeyPair, channel_id: ChannelId, cumulative: Funds) -> Voucher {
    let signature = keys.secret.sign(&encode_voucher(&channel_id, cumulative));
    Voucher { channel_id, cumulative, signature: signature.to_bytes() }
}

/// Strict verification: malleated or non-canonical signatures are rejected.
pub fn verify_voucher(public: &VerifyingKey, voucher: &Voucher) -> bool {
    let signature = ed25519_dalek::Signature::from_bytes(&voucher.signature);
    public.verify_strict(&voucher.message(), &signature).is_ok()
}
