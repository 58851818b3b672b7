//! Bencoding codec for `.torrent` files, tracker responses, KRPC messages and
//! PEX payloads.
//!
//! Decoding is strict about the value grammar (no leading zeros, no `-0`,
//! 64-bit integers only, whole-input consumption) but tolerates dictionaries
//! whose keys arrive out of order; real-world torrents contain them. Such
//! inputs are flagged via [`Decoded::non_canonical`] and re-encoding always
//! produces the canonical sorted form. Because the canonical re-encoding of a
//! non-canonical file differs from the original bytes, callers that need to
//! hash original spans (info-hash computation) use [`value_span`] to slice the
//! source buffer directly.

use std::collections::BTreeMap;
use std::ops::Range;

use thiserror::Error;

/// Recursion bound while decoding hostile input.
pub const MAX_DEPTH: usize = 128;

/// A parsed bencode value. Dictionary keys are raw byte strings kept in
/// ascending byte order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BencodeValue {
    Integer(i64),
    Bytes(Vec<u8>),
    List(Vec<BencodeValue>),
    Dict(BTreeMap<Vec<u8>, BencodeValue>),
}

impl BencodeValue {
    pub fn bytes(b: impl Into<Vec<u8>>) -> Self {
        BencodeValue::Bytes(b.into())
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            BencodeValue::Integer(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            BencodeValue::Bytes(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        self.as_bytes().and_then(|b| std::str::from_utf8(b).ok())
    }

    pub fn as_list(&self) -> Option<&[BencodeValue]> {
        match self {
            BencodeValue::List(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_dict(&self) -> Option<&BTreeMap<Vec<u8>, BencodeValue>> {
        match self {
            BencodeValue::Dict(d) => Some(d),
            _ => None,
        }
    }

    /// Dictionary field lookup; `None` for non-dicts and missing keys.
    pub fn get(&self, key: &[u8]) -> Option<&BencodeValue> {
        self.as_dict().and_then(|d| d.get(key))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BencodeError {
    #[error("input truncated at offset {0}")]
    Truncated(usize),
    #[error("unexpected byte 0x{byte:02x} at offset {offset}")]
    UnexpectedByte { offset: usize, byte: u8 },
    #[error("malformed integer at offset {0}")]
    InvalidInteger(usize),
    #[error("integer out of 64-bit range at offset {0}")]
    IntegerOverflow(usize),
    #[error("duplicate dictionary key at offset {0}")]
    DuplicateKey(usize),
    #[error("nesting deeper than {MAX_DEPTH}")]
    DepthLimitExceeded,
    #[error("trailing bytes after document at offset {0}")]
    TrailingBytes(usize),
}

/// Result of a decode: the value plus whether any dictionary in the input had
/// keys out of ascending byte order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub value: BencodeValue,
    pub non_canonical: bool,
}

/// Decode a complete bencoded document. Trailing bytes are an error.
pub fn decode(input: &[u8]) -> Result<Decoded, BencodeError> {
    let mut parser = Parser {
        input,
        pos: 0,
        non_canonical: false,
    };
    let value = parser.parse_value(0)?;
    if parser.pos != input.len() {
        return Err(BencodeError::TrailingBytes(parser.pos));
    }
    Ok(Decoded {
        value,
        non_canonical: parser.non_canonical,
    })
}

/// Canonical encoding: dict keys ascending by raw bytes, minimal integers.
pub fn encode(value: &BencodeValue) -> Vec<u8> {
    let mut out = Vec::new();
    encode_into(value, &mut out);
    out
}

fn encode_into(value: &BencodeValue, out: &mut Vec<u8>) {
    match value {
        BencodeValue::Integer(n) => {
            out.push(b'i');
            out.extend_from_slice(n.to_string().as_bytes());
            out.push(b'e');
        }
        BencodeValue::Bytes(b) => {
            out.extend_from_slice(b.len().to_string().as_bytes());
            out.push(b':');
            out.extend_from_slice(b);
        }
        BencodeValue::List(items) => {
            out.push(b'l');
            for item in items {
                encode_into(item, out);
            }
            out.push(b'e');
        }
        BencodeValue::Dict(entries) => {
            out.push(b'd');
            for (key, item) in entries {
                out.extend_from_slice(key.len().to_string().as_bytes());
                out.push(b':');
                out.extend_from_slice(key);
                encode_into(item, out);
            }
            out.push(b'e');
        }
    }
}

/// Byte range of the value reached by following `path` through nested
/// dictionaries, e.g. `value_span(torrent, &[b"info"])` yields the exact
/// span of the info dict as it appeared in the source. Returns `None` when a
/// path component is missing.
pub fn value_span(input: &[u8], path: &[&[u8]]) -> Result<Option<Range<usize>>, BencodeError> {
    let mut parser = Parser {
        input,
        pos: 0,
        non_canonical: false,
    };
    let span = parser.find_span(path, 0)?;
    Ok(span)
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
    non_canonical: bool,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Result<u8, BencodeError> {
        self.input
            .get(self.pos)
            .copied()
            .ok_or(BencodeError::Truncated(self.pos))
    }

    fn parse_value(&mut self, depth: usize) -> Result<BencodeValue, BencodeError> {
        if depth > MAX_DEPTH {
            return Err(BencodeError::DepthLimitExceeded);
        }
        match self.peek()? {
            b'i' => self.parse_integer(),
            b'l' => self.parse_list(depth),
            b'd' => self.parse_dict(depth),
            b'0'..=b'9' => Ok(BencodeValue::Bytes(self.parse_string()?.to_vec())),
            byte => Err(BencodeError::UnexpectedByte {
                offset: self.pos,
                byte,
            }),
        }
    }

    fn parse_integer(&mut self) -> Result<BencodeValue, BencodeError> {
        let start = self.pos;
        self.pos += 1; // 'i'
        let negative = if self.peek()? == b'-' {
            self.pos += 1;
            true
        } else {
            false
        };
        let digits_start = self.pos;
        while self.peek()? != b'e' {
            let b = self.input[self.pos];
            if !b.is_ascii_digit() {
                return Err(BencodeError::InvalidInteger(start));
            }
            self.pos += 1;
        }
        let digits = &self.input[digits_start..self.pos];
        self.pos += 1; // 'e'
        if digits.is_empty() {
            return Err(BencodeError::InvalidInteger(start));
        }
        // Canonical integers: no leading zeros, and no "-0".
        if digits.len() > 1 && digits[0] == b'0' {
            return Err(BencodeError::InvalidInteger(start));
        }
        if negative && digits == b"0" {
            return Err(BencodeError::InvalidInteger(start));
        }
        let text = std::str::from_utf8(digits).expect("digits are ASCII");
        let magnitude = if negative {
            format!("-{text}")
        } else {
            text.to_string()
        };
        let n: i64 = magnitude
            .parse()
            .map_err(|_| BencodeError::IntegerOverflow(start))?;
        Ok(BencodeValue::Integer(n))
    }

    fn parse_string(&mut self) -> Result<&'a [u8], BencodeError> {
        let start = self.pos;
        let mut len: usize = 0;
        let len_start = self.pos;
        while self.peek()? != b':' {
            let b = self.input[self.pos];
            if !b.is_ascii_digit() {
                return Err(BencodeError::UnexpectedByte {
                    offset: self.pos,
                    byte: b,
                });
            }
            len = len
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as usize))
                .ok_or(BencodeError::IntegerOverflow(start))?;
            self.pos += 1;
        }
        let len_digits = &self.input[len_start..self.pos];
        if len_digits.len() > 1 && len_digits[0] == b'0' {
            return Err(BencodeError::InvalidInteger(start));
        }
        self.pos += 1; // ':'
        let end = self
            .pos
            .checked_add(len)
            .ok_or(BencodeError::IntegerOverflow(start))?;
        if end > self.input.len() {
            return Err(BencodeError::Truncated(self.input.len()));
        }
        let bytes = &self.input[self.pos..end];
        self.pos = end;
        Ok(bytes)
    }

    fn parse_list(&mut self, depth: usize) -> Result<BencodeValue, BencodeError> {
        self.pos += 1; // 'l'
        let mut items = Vec::new();
        while self.peek()? != b'e' {
            items.push(self.parse_value(depth + 1)?);
        }
        self.pos += 1; // 'e'
        Ok(BencodeValue::List(items))
    }

    fn parse_dict(&mut self, depth: usize) -> Result<BencodeValue, BencodeError> {
        self.pos += 1; // 'd'
        let mut entries = BTreeMap::new();
        let mut last_key: Option<Vec<u8>> = None;
        while self.peek()? != b'e' {
            let key_offset = self.pos;
            match self.peek()? {
                b'0'..=b'9' => {}
                byte => {
                    return Err(BencodeError::UnexpectedByte {
                        offset: key_offset,
                        byte,
                    })
                }
            }
            let key = self.parse_string()?.to_vec();
            if let Some(prev) = &last_key {
                if key <= *prev {
                    self.non_canonical = true;
                }
            }
            let value = self.parse_value(depth + 1)?;
            if entries.insert(key.clone(), value).is_some() {
                return Err(BencodeError::DuplicateKey(key_offset));
            }
            last_key = Some(key);
        }
        self.pos += 1; // 'e'
        Ok(BencodeValue::Dict(entries))
    }

    /// Parse one value, discarding it, and return its byte range.
    fn skip_value(&mut self, depth: usize) -> Result<Range<usize>, BencodeError> {
        let start = self.pos;
        self.parse_value(depth)?;
        Ok(start..self.pos)
    }

    /// Walk nested dicts along `path`; the final matched value's range is
    /// returned. Validates the whole document it traverses.
    fn find_span(
        &mut self,
        path: &[&[u8]],
        depth: usize,
    ) -> Result<Option<Range<usize>>, BencodeError> {
        if path.is_empty() {
            return Ok(Some(self.skip_value(depth)?));
        }
        if depth > MAX_DEPTH {
            return Err(BencodeError::DepthLimitExceeded);
        }
        if self.peek()? != b'd' {
            return Ok(None);
        }
        self.pos += 1; // 'd'
        let mut found = None;
        while self.peek()? != b'e' {
            match self.peek()? {
                b'0'..=b'9' => {}
                byte => {
                    return Err(BencodeError::UnexpectedByte {
                        offset: self.pos,
                        byte,
                    })
                }
            }
            let key = self.parse_string()?;
            if key == path[0] && found.is_none() {
                found = self.find_span(&path[1..], depth + 1)?;
            } else {
                self.skip_value(depth + 1)?;
            }
        }
        self.pos += 1; // 'e'
        Ok(found)
    }
}
