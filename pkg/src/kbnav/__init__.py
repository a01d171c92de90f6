"""kbnav - answer questions over Wikidata with an LLM agent that writes SPARQL."""

__version__ = "0.1.0"
