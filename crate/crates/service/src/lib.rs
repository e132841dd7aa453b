//! HTTP API and command-line front end for thematic image navigation.
//!
//! [`api::router`] serves sessions over JSON; [`cli`] runs the same
//! pipeline headlessly. Both are built from a [`config::Config`] by
//! [`app::build`].

pub mod api;
pub mod app;
pub mod cli;
pub mod config;
pub mod demo;
pub mod error;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/api.md")]
    struct Api;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
