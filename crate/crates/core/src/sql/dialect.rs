//! Per-dialect seams: identifier quoting, type-name mapping, parser flavour
//! and how to open a connection.

use sqlparser::dialect::{
    Dialect as ParserDialect, MsSqlDialect, MySqlDialect, PostgreSqlDialect, SQLiteDialect,
    GenericDialect,
};

use super::engine::{SqliteConnection, SqlConnection};
use super::{ConnectionConfig, Dialect, SqlError};
use crate::table::{semantic_from_declared, SemanticType};

pub trait DialectAdapter: Send + Sync {
    fn dialect(&self) -> Dialect;

    /// Quotes an identifier unconditionally.
    fn quote_ident(&self, ident: &str) -> String;

    /// Maps a declared type name to a semantic type; `None` means text-like,
    /// to be resolved by distinct count.
    fn semantic_type(&self, declared: &str) -> Option<SemanticType> {
        semantic_from_declared(declared)
    }

    fn parser_dialect(&self) -> Box<dyn ParserDialect>;

    fn open(&self, config: &ConnectionConfig) -> Result<Box<dyn SqlConnection>, SqlError>;
}

/// The file-backed engine used at desk scale.
#[derive(Debug, Default, Clone, Copy)]
pub struct EmbeddedAdapter;

impl DialectAdapter for EmbeddedAdapter {
    fn dialect(&self) -> Dialect {
        Dialect::Embedded
    }

    fn quote_ident(&self, ident: &str) -> String {
        format!("\"{}\"", ident.replace('"', "\"\""))
    }

    fn parser_dialect(&self) -> Box<dyn ParserDialect> {
        Box::new(SQLiteDialect {})
    }

    fn open(&self, config: &ConnectionConfig) -> Result<Box<dyn SqlConnection>, SqlError> {
        Ok(Box::new(SqliteConnection::open(&config.location)?))
    }
}

/// Server dialects. Quoting and type names are dialect-specific; no network
/// driver is linked into this build, so `open` reports `ConnectionFailed`
/// unless a driver is supplied through [`ServerAdapter::with_driver`].
pub struct ServerAdapter {
    dialect: Dialect,
    driver: Option<Box<dyn Fn(&ConnectionConfig) -> Result<Box<dyn SqlConnection>, SqlError> + Send + Sync>>,
}

impl std::fmt::Debug for ServerAdapter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerAdapter")
            .field("dialect", &self.dialect)
            .field("has_driver", &self.driver.is_some())
            .finish()
    }
}

impl ServerAdapter {
    pub fn new(dialect: Dialect) -> Self {
        Self { dialect, driver: None }
    }

    pub fn with_driver(
        mut self,
        driver: impl Fn(&ConnectionConfig) -> Result<Box<dyn SqlConnection>, SqlError> + Send + Sync + 'static,
    ) -> Self {
        self.driver = Some(Box::new(driver));
        self
    }

    /// Type names whose meaning differs from the generic mapping.
    fn override_type(&self, upper: &str) -> Option<Option<SemanticType>> {
        let base = upper.split('(').next().unwrap_or(upper).trim();
        let mapped = match (self.dialect, base) {
            (Dialect::Mysql | Dialect::Mariadb, "TINYINT") if upper.contains("(1)") => {
                Some(SemanticType::Boolean)
            }
            (Dialect::Mysql | Dialect::Mariadb, "YEAR") => Some(SemanticType::Temporal),
            (Dialect::Mysql | Dialect::Mariadb, "ENUM" | "SET") => None,
            (Dialect::Postgresql, "BOOL") => Some(SemanticType::Boolean),
            (Dialect::Postgresql, "INTERVAL") => Some(SemanticType::Quantitative),
            (Dialect::Postgresql, "TIMESTAMPTZ" | "TIMETZ") => Some(SemanticType::Temporal),
            (Dialect::Postgresql, "UUID" | "JSON" | "JSONB" | "BYTEA") => Some(SemanticType::Unknown),
            (Dialect::Mssql, "BIT") => Some(SemanticType::Boolean),
            (Dialect::Mssql, "DATETIME2" | "DATETIMEOFFSET" | "SMALLDATETIME") => Some(SemanticType::Temporal),
            (Dialect::Mssql, "UNIQUEIDENTIFIER" | "VARBINARY") => Some(SemanticType::Unknown),
            (Dialect::Mssql, "NVARCHAR" | "NCHAR" | "NTEXT") => None,
            (Dialect::Oracle, "NUMBER" | "BINARY_FLOAT" | "BINARY_DOUBLE") => Some(SemanticType::Quantitative),
            (Dialect::Oracle, "VARCHAR2" | "NVARCHAR2" | "NCLOB") => None,
            (Dialect::Oracle, "RAW" | "BLOB") => Some(SemanticType::Unknown),
            _ => return None,
        };
        Some(mapped)
    }
}

impl DialectAdapter for ServerAdapter {
    fn dialect(&self) -> Dialect {
        self.dialect
    }

    fn quote_ident(&self, ident: &str) -> String {
        match self.dialect {
            Dialect::Mysql | Dialect::Mariadb => format!("`{}`", ident.replace('`', "``")),
            Dialect::Mssql => format!("[{}]", ident.replace(']', "]]")),
            _ => format!("\"{}\"", ident.replace('"', "\"\"")),
        }
    }

    fn semantic_type(&self, declared: &str) -> Option<SemanticType> {
        let upper = declared.trim().to_ascii_uppercase();
        match self.override_type(&upper) {
            Some(mapped) => mapped,
            None => semantic_from_declared(declared),
        }
    }

    fn parser_dialect(&self) -> Box<dyn ParserDialect> {
        match self.dialect {
            Dialect::Mysql | Dialect::Mariadb => Box::new(MySqlDialect {}),
            Dialect::Postgresql => Box::new(PostgreSqlDialect {}),
            Dialect::Mssql => Box::new(MsSqlDialect {}),
            _ => Box::new(GenericDialect {}),
        }
    }

    fn open(&self, config: &ConnectionConfig) -> Result<Box<dyn SqlConnection>, SqlError> {
        match &self.driver {
            Some(driver) => driver(config),
            None => Err(SqlError::ConnectionFailed(format!(
                "no {} driver is available in this build",
                self.dialect
            ))),
        }
    }
}

const RESERVED: [&str; 24] = [
    "select", "from", "where", "group", "order", "by", "limit", "join", "on", "as", "and", "or",
    "not", "table", "index", "key", "values", "case", "when", "then", "end", "union", "all", "with",
];

/// Quotes `ident` only when it is not a plain lower-snake identifier or
/// collides with a reserved word.
pub fn quote_if_needed(adapter: &dyn DialectAdapter, ident: &str) -> String {
    let plain = !ident.is_empty()
        && ident.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && ident.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !RESERVED.contains(&ident.to_ascii_lowercase().as_str());
    if plain {
        ident.to_string()
    } else {
        adapter.quote_ident(ident)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting_per_dialect() {
        assert_eq!(EmbeddedAdapter.quote_ident("a b"), "\"a b\"");
        assert_eq!(ServerAdapter::new(Dialect::Mysql).quote_ident("a`b"), "`a``b`");
        assert_eq!(ServerAdapter::new(Dialect::Mssql).quote_ident("x"), "[x]");
        assert_eq!(ServerAdapter::new(Dialect::Oracle).quote_ident("x"), "\"x\"");
    }

    #[test]
    fn plain_identifiers_stay_bare() {
        assert_eq!(quote_if_needed(&EmbeddedAdapter, "amount"), "amount");
        assert_eq!(quote_if_needed(&EmbeddedAdapter, "order"), "\"order\"");
        assert_eq!(quote_if_needed(&EmbeddedAdapter, "Total Sales"), "\"Total Sales\"");
    }

    #[test]
    fn dialect_type_overrides() {
        let pg = ServerAdapter::new(Dialect::Postgresql);
        assert_eq!(pg.semantic_type("bool"), Some(SemanticType::Boolean));
        assert_eq!(pg.semantic_type("timestamptz"), Some(SemanticType::Temporal));
        let ms = ServerAdapter::new(Dialect::Mssql);
        assert_eq!(ms.semantic_type("bit"), Some(SemanticType::Boolean));
        assert_eq!(ms.semantic_type("nvarchar(50)"), None);
        let my = ServerAdapter::new(Dialect::Mysql);
        assert_eq!(my.semantic_type("tinyint(1)"), Some(SemanticType::Boolean));
        assert_eq!(my.semantic_type("tinyint"), Some(SemanticType::Quantitative));
        let ora = ServerAdapter::new(Dialect::Oracle);
        assert_eq!(ora.semantic_type("NUMBER(10,2)"), Some(SemanticType::Quantitative));
        assert_eq!(ora.semantic_type("VARCHAR2(30)"), None);
    }

    #[test]
    fn server_without_driver_fails_to_connect() {
        let adapter = ServerAdapter::new(Dialect::Postgresql);
        let cfg = ConnectionConfig {
            dialect: Dialect::Postgresql,
            location: "postgresql://u:p@localhost/db".into(),
            read_only: true,
        };
        assert!(matches!(adapter.open(&cfg), Err(SqlError::ConnectionFailed(_))));
    }
}
