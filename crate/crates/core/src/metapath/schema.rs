use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hin::{types_connectable, NodeType};

const MAX_LEN: usize = 6;
const MIN_LEN: usize = 3;

/// Which endpoint pair a schema connects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemaKind {
    UserItem,
    ItemItem,
}

/// A node-type template such as `UIBI` or `ICIUI`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetaPathSchema {
    types: [NodeType; MAX_LEN],
    len: u8,
}

impl MetaPathSchema {
    pub fn new(types: &[NodeType]) -> Result<Self> {
        let name: String = types.iter().map(|t| t.letter()).collect();
        let invalid = |reason: &str| Error::InvalidSchema {
            schema: name.clone(),
            reason: reason.to_string(),
        };
        if !(MIN_LEN..=MAX_LEN).contains(&types.len()) {
            return Err(invalid("length must be between 3 and 6"));
        }
        if let Some(w) = types.windows(2).find(|w| !types_connectable(w[0], w[1])) {
            return Err(invalid(&format!("no relation joins {:?} and {:?}", w[0], w[1])));
        }
        let ends = (types[0], types[types.len() - 1]);
        if !matches!(
            ends,
            (NodeType::User, NodeType::Item) | (NodeType::Item, NodeType::Item)
        ) {
            return Err(invalid("must run User…Item or Item…Item"));
        }
        let mut arr = [NodeType::User; MAX_LEN];
        arr[..types.len()].copy_from_slice(types);
        Ok(Self {
            types: arr,
            len: types.len() as u8,
        })
    }

    pub fn types(&self) -> &[NodeType] {
        &self.types[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn hops(&self) -> usize {
        self.len() - 1
    }

    pub fn kind(&self) -> SchemaKind {
        if self.types[0] == NodeType::User {
            SchemaKind::UserItem
        } else {
            SchemaKind::ItemItem
        }
    }

    pub fn first(&self) -> NodeType {
        self.types[0]
    }

    pub fn last(&self) -> NodeType {
        self.types[self.len() - 1]
    }
}

impl FromStr for MetaPathSchema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let types = s
            .trim()
            .chars()
            .map(|c| {
                NodeType::from_letter(c).ok_or_else(|| Error::InvalidSchema {
                    schema: s.to_string(),
                    reason: format!("unknown node letter `{c}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&types)
    }
}

impl fmt::Display for MetaPathSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in self.types() {
            write!(f, "{}", t.letter())?;
        }
        Ok(())
    }
}

impl fmt::Debug for MetaPathSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MetaPathSchema({self})")
    }
}

pub const DEFAULT_USER_ITEM: [&str; 4] = ["UIBI", "UICI", "UIBICI", "UICIBI"];
pub const DEFAULT_ITEM_ITEM: [&str; 7] = ["ICIBI", "IBICI", "ICICI", "IBIBI", "IUIUI", "ICIUI", "IBIUI"];

pub fn parse_list(names: &[&str]) -> Result<Vec<MetaPathSchema>> {
    names.iter().map(|s| s.parse()).collect()
}

pub fn default_user_item() -> Vec<MetaPathSchema> {
    parse_list(&DEFAULT_USER_ITEM).expect("built-in schemas are valid")
}

pub fn default_item_item() -> Vec<MetaPathSchema> {
    parse_list(&DEFAULT_ITEM_ITEM).expect("built-in schemas are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_have_expected_kinds() {
        assert!(default_user_item().iter().all(|s| s.kind() == SchemaKind::UserItem));
        assert!(default_item_item().iter().all(|s| s.kind() == SchemaKind::ItemItem));
        assert_eq!(default_item_item().len(), 7);
    }

    #[test]
    fn display_roundtrips() {
        for name in DEFAULT_USER_ITEM.iter().chain(&DEFAULT_ITEM_ITEM) {
            assert_eq!(name.parse::<MetaPathSchema>().unwrap().to_string(), *name);
        }
    }

    #[test]
    fn rejects_invalid_schemas() {
        for bad in ["UI", "UIBICIU", "UBI", "IBB", "BIB", "UIU", "IXI", "IIC"] {
            assert!(bad.parse::<MetaPathSchema>().is_err(), "{bad}");
        }
        assert!("IUI".parse::<MetaPathSchema>().is_ok());
    }
}
