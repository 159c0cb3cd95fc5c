"""Domain types and document schemas."""
