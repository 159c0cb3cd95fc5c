"""Test suite for prophetlab."""
