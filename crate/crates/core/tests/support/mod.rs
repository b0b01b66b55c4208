pub mod glue;
pub mod oracle;
pub mod properties;
