import pytest

from dcralgo.avm import Ledger
from dcralgo.contract import deploy
from dcralgo.dcr import derive_address
from dcralgo.graphfile import parse_graph
from dcralgo.scenario import corpus_text

CREATOR = derive_address("creator")
FUNDS = 10**12


@pytest.fixture
def mortgage_file():
    return parse_graph(corpus_text("mortgage.dcr"))


@pytest.fixture
def mortgage(mortgage_file):
    """Ledger and client for the shipped mortgage contract."""
    ledger = Ledger()
    ledger.fund(CREATOR, FUNDS)
    for addr in set(mortgage_file.executors):
        ledger.fund(addr, FUNDS)
    built = deploy(ledger, CREATOR, mortgage_file.executors, mortgage_file.relations, mortgage_file.marking)
    return ledger, built.client
