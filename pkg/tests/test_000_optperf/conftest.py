''' Shared fixtures for package tests. '''


import pytest

from . import __


def pytest_sessionfinish( session, exitstatus ):
    if exitstatus == 5:  # pytest exit code for "no tests collected"
        session.exitstatus = 0


@pytest.fixture( autouse = True )
def _clear_seed_override( monkeypatch ):
    ''' Keeps seed overrides from the outer environment out of tests. '''
    configuration = __.cache_import_module(
        f"{__.PACKAGE_NAME}.configuration" )
    monkeypatch.delenv( configuration.SEED_VARIABLE, raising = False )


@pytest.fixture
def two_node_cluster( ):
    ''' Heterogeneous pair with a fast and a slow node. '''
    return __.produce_cluster( ( __.NODE_FAST, __.NODE_SLOW ) )


@pytest.fixture
def three_node_cluster( ):
    ''' Registered three-node reference cluster. '''
    configuration = __.cache_import_module(
        f"{__.PACKAGE_NAME}.configuration" )
    return configuration.cluster_presets[ 'three-node' ]( )
