# vim: set filetype=python fileencoding=utf-8:
# -*- coding: utf-8 -*-

#============================================================================#
#                                                                            #
#  Licensed under the Apache License, Version 2.0 (the "License");           #
#  you may not use this file except in compliance with the License.          #
#  You may obtain a copy of the License at                                   #
#                                                                            #
#      http://www.apache.org/licenses/LICENSE-2.0                            #
#                                                                            #
#  Unless required by applicable law or agreed to in writing, software       #
#  distributed under the License is distributed on an "AS IS" BASIS,         #
#  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.  #
#  See the License for the specific language governing permissions and       #
#  limitations under the License.                                            #
#                                                                            #
#============================================================================#



''' Run configuration loading tests. '''


import json
import math

from pathlib import Path

import pytest

from pyfakefs.fake_filesystem_unittest import Patcher

from . import __


MODULE_QNAME = f"{__.PACKAGE_NAME}.configuration"
VALID_DIRECTORY = 'tests/data/configuration/valid'
INVALID_DIRECTORY = 'tests/data/configuration/invalid'
SCHEMA_LOCATION = 'data/schema.json'


def _load_fixture( directory, name, environment = None ):
    module = __.cache_import_module( MODULE_QNAME )
    nomargs = { } if environment is None else { 'environment': environment }
    with Patcher( ) as patcher:
        patcher.fs.add_real_directory( directory, lazy_read = True )
        return module.load_configuration(
            f"{directory}/{name}", **nomargs )


# =============================================================================
# Basic Functionality Tests (000-099)
# =============================================================================

def test_000_configuration_invalidity_inheritance( ):
    ''' ConfigurationInvalidity inherits correctly from Omnierror. '''
    module = __.cache_import_module( MODULE_QNAME )
    exceptions = __.cache_import_module( f"{__.PACKAGE_NAME}.exceptions" )
    exc = module.ConfigurationInvalidity( '/test', 'test reason' )
    assert isinstance( exc, exceptions.Omnierror )
    assert isinstance( exc, ValueError )
    assert exc.location == '/test'
    assert 'test reason' in str( exc )


def test_010_configuration_absence_inheritance( ):
    ''' ConfigurationAbsence inherits correctly from Omnierror. '''
    module = __.cache_import_module( MODULE_QNAME )
    exceptions = __.cache_import_module( f"{__.PACKAGE_NAME}.exceptions" )
    exc = module.ConfigurationAbsence( '/missing.toml' )
    assert isinstance( exc, exceptions.Omnierror )
    assert isinstance( exc, FileNotFoundError )


@pytest.mark.parametrize( 'name, size', [
    ( 'three-node', 3 ), ( 'sixteen-node', 16 ) ] )
def test_020_cluster_presets( name, size ):
    ''' Registered clusters have expected sizes and no caps. '''
    module = __.cache_import_module( MODULE_QNAME )
    absence = __.cache_import_module( 'absence' )
    spec = module.cluster_presets[ name ]( )
    assert spec.size == size
    assert absence.is_absent( spec.caps )
    assert [ node.node_id for node in spec.nodes ] == list( range( size ) )


def test_030_schema_matches_loader( ):
    ''' Published schema lists presets and keys the loader renders. '''
    module = __.cache_import_module( MODULE_QNAME )
    schema = json.loads(
        Path( SCHEMA_LOCATION ).read_text( encoding = 'utf-8' ) )
    definitions = schema[ '$defs' ]
    presets = definitions[ 'cluster' ][ 'oneOf' ][ 0 ][ 'properties' ]
    assert sorted( presets[ 'preset' ][ 'enum' ] ) == sorted(
        module.cluster_presets )
    config = _load_fixture( VALID_DIRECTORY, 'nodes.toml' )
    rendition = config.render_as_json( )
    tables = definitions[ 'configuration' ][ 'properties' ]
    for name in ( 'simulation', 'gradients', 'adaptive' ):
        assert set( rendition[ name ] ) <= set(
            tables[ name ][ 'properties' ] )
    node_keys = set( definitions[ 'node' ][ 'properties' ] )
    for node in rendition[ 'cluster' ][ 'nodes' ]:
        assert set( node ) <= node_keys


# =============================================================================
# Loading Tests (100-199)
# =============================================================================

def test_100_loads_preset( ):
    ''' Preset clusters load with document overrides. '''
    config = _load_fixture( VALID_DIRECTORY, 'preset.toml' )
    assert config.cluster.size == 3
    assert config.world.seed == 7
    assert config.world.noise_cv == pytest.approx( 0.02 )
    assert config.adaptive.epochs == 4
    assert config.adaptive.batches_per_epoch == 10
    assert ( config.adaptive.b_min, config.adaptive.b_max ) == ( 64, 512 )
    assert config.adaptive.candidates == 4


def test_110_loads_explicit_nodes( ):
    ''' Node coefficients, caps and noise settings load from TOML. '''
    config = _load_fixture( VALID_DIRECTORY, 'nodes.toml' )
    cluster = config.cluster
    assert cluster.size == 2
    assert ( cluster.nodes[ 1 ].q, cluster.nodes[ 1 ].m ) == ( 0.002, 0.08 )
    assert cluster.comm.gamma == 0.5
    caps = cluster.produce_caps( )
    assert caps[ 0 ] == 80
    assert math.isinf( caps[ 1 ] )
    assert config.world.gamma_noise_cvs == ( 0.0, 0.1 )
    assert config.world.n_buckets == 4
    assert config.world.gradients.dimension == 64
    assert config.adaptive.ema_decay == 0.5
    assert config.adaptive.fixed_batch == 100


def test_120_loads_json_with_defaults( ):
    ''' JSON documents load; omitted tables take defaults. '''
    absence = __.cache_import_module( 'absence' )
    config = _load_fixture( VALID_DIRECTORY, 'nodes.json' )
    assert config.cluster.size == 2
    assert absence.is_absent( config.cluster.caps )
    assert config.world.seed == 0
    assert config.world.noise_cv == pytest.approx( 0.05 )
    assert config.world.n_buckets == 8
    assert config.world.gradients.tr_sigma == 100.0
    assert config.adaptive.epochs == 10
    assert config.adaptive.candidates == 8
    assert absence.is_absent( config.adaptive.fixed_batch )


def test_130_missing_file( ):
    ''' Absent files raise ConfigurationAbsence. '''
    module = __.cache_import_module( MODULE_QNAME )
    with Patcher( ) as patcher:
        patcher.fs.create_dir( '/empty' )
        with pytest.raises( module.ConfigurationAbsence ):
            module.load_configuration( '/empty/optperf.toml' )


def test_140_rendition_reloads( ):
    ''' Rendered configuration parses back to the same rendition. '''
    module = __.cache_import_module( MODULE_QNAME )
    config = _load_fixture( VALID_DIRECTORY, 'nodes.toml' )
    rendition = config.render_as_json( )
    assert rendition[ 'cluster' ][ 'nodes' ][ 0 ][ 'max_local_batch' ] == 80
    assert 'max_local_batch' not in rendition[ 'cluster' ][ 'nodes' ][ 1 ]
    reparsed = module.parse_configuration( rendition, '<rendition>' )
    assert reparsed.render_as_json( ) == rendition


# =============================================================================
# Seed Override Tests (200-299)
# =============================================================================

def test_200_seed_override_from_mapping( ):
    ''' Seed variable replaces document seed. '''
    module = __.cache_import_module( MODULE_QNAME )
    config = _load_fixture(
        VALID_DIRECTORY, 'preset.toml',
        environment = { module.SEED_VARIABLE: ' 42 ' } )
    assert config.world.seed == 42
    assert config.adaptive.epochs == 4


def test_210_seed_override_from_process( monkeypatch ):
    ''' Process environment applies when no mapping is given. '''
    module = __.cache_import_module( MODULE_QNAME )
    monkeypatch.setenv( module.SEED_VARIABLE, '9' )
    config = _load_fixture( VALID_DIRECTORY, 'preset.toml' )
    assert config.world.seed == 9


def test_220_empty_seed_override_is_ignored( ):
    ''' Blank seed variable keeps document seed. '''
    module = __.cache_import_module( MODULE_QNAME )
    config = _load_fixture(
        VALID_DIRECTORY, 'preset.toml',
        environment = { module.SEED_VARIABLE: '' } )
    assert config.world.seed == 7


@pytest.mark.parametrize( 'text', [ 'abc', '-1', '1.5' ] )
def test_230_invalid_seed_override( text ):
    ''' Seed variable must hold a non-negative integer. '''
    module = __.cache_import_module( MODULE_QNAME )
    with pytest.raises( module.ConfigurationInvalidity ) as exc_info:
        _load_fixture(
            VALID_DIRECTORY, 'preset.toml',
            environment = { module.SEED_VARIABLE: text } )
    assert exc_info.value.location == module.SEED_VARIABLE


# =============================================================================
# Invalid Configuration Tests (300-399)
# =============================================================================

@pytest.mark.parametrize( 'name, fragment', [
    ( 'missing-cluster.toml', 'Missing required table "cluster"' ),
    ( 'unknown-preset.toml', 'Unknown cluster preset' ),
    ( 'cluster-without-nodes.toml',
      'Table "cluster" needs "nodes" or "preset"' ),
    ( 'node-missing-key.json', 'Missing required key "q"' ),
    ( 'string-coefficient.toml', '"q" must be a number, got str' ),
    ( 'gamma-out-of-range.toml', "Invalid value for 'gamma'" ),
    ( 'b-min-below-nodes.toml',
      '"b_min" must be at least the node count 3, got 2' ),
    ( 'fractional-epochs.toml', '"epochs" must be an integer, got float' ),
    ( 'bad-syntax.json', 'Invalid JSON syntax' ),
    ( 'bad-syntax.toml', 'Invalid TOML syntax' ),
    ( 'top-level-list.json', 'Document must be a table at top level' ),
] )
def test_300_invalid_documents( name, fragment ):
    ''' Invalid documents name the offending part. '''
    module = __.cache_import_module( MODULE_QNAME )
    with pytest.raises( module.ConfigurationInvalidity ) as exc_info:
        _load_fixture( INVALID_DIRECTORY, name )
    assert fragment in exc_info.value.reason
    assert exc_info.value.location.endswith( name )


@pytest.mark.parametrize( 'data, fragment', [
    ( { 'cluster': { 'preset': 'three-node' }, 'simulation': [ ] },
      '"simulation" must be a table, got list' ),
    ( { 'cluster': { 'preset': 'three-node' },
        'adaptive': { 'candidates': 0 } },
      '"candidates" must be at least 1, got 0' ),
    ( { 'cluster': { 'preset': 'three-node' },
        'adaptive': { 'b_min': 600, 'b_max': 512 } },
      "Invalid value for 'b_min'" ),
    ( { 'cluster': { 'preset': 'three-node' },
        'simulation': { 'gamma_noise_cvs': [ 0.1 ] } },
      'cluster has 3 nodes' ),
    ( { 'cluster': { 'preset': 'three-node' },
        'simulation': { 'noise_cv': True } },
      '"noise_cv" must be a number, got bool' ),
] )
def test_310_invalid_tables( data, fragment ):
    ''' Parsed tables are validated with their keys named. '''
    module = __.cache_import_module( MODULE_QNAME )
    with pytest.raises( module.ConfigurationInvalidity ) as exc_info:
        module.parse_configuration( data, '<memory>' )
    assert fragment in exc_info.value.reason
