//! HTTP front end and command-line tools for the aesthetic CAPTCHA service.

pub mod cli;
pub mod http;
pub mod remote;
