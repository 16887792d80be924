"""Command-line front end for rmst-targeted."""
