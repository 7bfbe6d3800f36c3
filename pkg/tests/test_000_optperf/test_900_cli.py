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



''' Command-line interface tests. '''


import asyncio
import json
import subprocess
import sys

import pytest

from . import __


MODULE_QNAME = f"{__.PACKAGE_NAME}.cli"


def _write_homogeneous_config( directory, count = 4 ):
    node = dict( zip( ( 'q', 's', 'k', 'm' ), __.NODE_FAST ) )
    document = {
        'cluster': {
            'gamma': 0.5, 't_o': 0.2, 't_u': 0.05,
            'nodes': [ node ] * count },
        'simulation': { 'epochs': 3, 'batches_per_epoch': 2 },
        'adaptive': { 'b_min': 64, 'b_max': 256, 'candidates': 3 },
    }
    path = directory / 'cluster.json'
    path.write_text( json.dumps( document ), encoding = 'utf-8' )
    return str( path )


def _write_two_node_config( directory, t_o ):
    nodes = [
        dict( zip( ( 'q', 's', 'k', 'm' ), coefficients ) )
        for coefficients in ( __.NODE_FAST, __.NODE_SLOW ) ]
    document = {
        'cluster': {
            'gamma': 0.5, 't_o': t_o, 't_u': 0.05, 'nodes': nodes } }
    path = directory / 'two-node.json'
    path.write_text( json.dumps( document ), encoding = 'utf-8' )
    return str( path )


def _invoke( command, display_format = 'json' ):
    module = __.cache_import_module( MODULE_QNAME )
    display = module.DisplayOptions(
        format = module.DisplayFormats( display_format ) )
    cli = module.Cli( command = command, display = display )
    with pytest.raises( SystemExit ) as exc_info:
        asyncio.run( cli( ) )
    return exc_info.value.code


def _execute( *arguments ):
    return subprocess.run(
        ( sys.executable, '-m', __.PACKAGE_NAME, *arguments ),
        capture_output = True, check = False, text = True )


def _read_json( capsys ):
    captured = capsys.readouterr( )
    return _parse_json( captured.out + captured.err )


def _parse_json( text ):
    lines = text.splitlines( keepends = True )
    index = max(
        i for i, line in enumerate( lines ) if line.startswith( '{' ) )
    document, _ = json.JSONDecoder( ).raw_decode(
        ''.join( lines[ index: ] ) )
    return document


# =============================================================================
# Exit Code Tests (000-099)
# =============================================================================

def test_000_exit_codes( ):
    ''' Infeasible problems exit with two; other errors with one. '''
    module = __.cache_import_module( MODULE_QNAME )
    exceptions = __.cache_import_module( f"{__.PACKAGE_NAME}.exceptions" )
    configuration = __.cache_import_module(
        f"{__.PACKAGE_NAME}.configuration" )
    assert module.produce_exit_code(
        exceptions.AllocationInfeasibility( 1, 'too few samples' ) ) == 2
    assert module.produce_exit_code(
        configuration.ConfigurationAbsence( '/missing.toml' ) ) == 1
    assert module.produce_exit_code(
        exceptions.DomainInvalidity( 'gamma', 'out of range' ) ) == 1


# =============================================================================
# Command Tests (100-199)
# =============================================================================

def test_100_solve_homogeneous( tmp_path, capsys ):
    ''' Identical nodes share the batch evenly. '''
    module = __.cache_import_module( MODULE_QNAME )
    config = _write_homogeneous_config( tmp_path )
    code = _invoke( module.SolveCommand( config = config, batch = 128 ) )
    assert code == 0
    result = _read_json( capsys )
    assert result[ 'alloc_int' ] == [ 32, 32, 32, 32 ]
    assert result[ 'total' ] == 128
    assert result[ 'clamped_nodes' ] == [ ]


def test_101_solve_text( tmp_path, capsys ):
    ''' Text output tabulates nodes. '''
    module = __.cache_import_module( MODULE_QNAME )
    config = _write_homogeneous_config( tmp_path )
    code = _invoke(
        module.SolveCommand( config = config, batch = 128 ),
        display_format = 'text' )
    assert code == 0
    captured = capsys.readouterr( )
    text = captured.out + captured.err
    assert 'Total batch size: 128' in text
    assert 'Scenario: ' in text


def test_102_solve_two_node_all_compute( tmp_path, capsys ):
    ''' Short hidden synchronization splits by computing speed. '''
    module = __.cache_import_module( MODULE_QNAME )
    config = _write_two_node_config( tmp_path, t_o = 0.1 )
    code = _invoke( module.SolveCommand( config = config, batch = 100 ) )
    assert code == 0
    result = _read_json( capsys )
    assert result[ 'scenario' ] == 'all-compute'
    assert result[ 'labels' ] == [ 'compute', 'compute' ]
    assert result[ 'alloc_int' ] == [ 61, 39 ]
    assert result[ 'alloc_real' ] == [ 61.1111111, 38.8888889 ]
    assert result[ 'batch_time' ] == 0.383333333


def test_110_solve_infeasible( tmp_path, capsys ):
    ''' Fewer samples than nodes exits with two. '''
    module = __.cache_import_module( MODULE_QNAME )
    config = _write_homogeneous_config( tmp_path )
    code = _invoke( module.SolveCommand( config = config, batch = 3 ) )
    assert code == 2
    result = _read_json( capsys )
    assert result[ 'type' ] == 'AllocationInfeasibility'


def test_120_missing_configuration( tmp_path, capsys ):
    ''' Absent configuration exits with one. '''
    module = __.cache_import_module( MODULE_QNAME )
    code = _invoke( module.SolveCommand(
        config = str( tmp_path / 'absent.toml' ), batch = 128 ) )
    assert code == 1
    result = _read_json( capsys )
    assert result[ 'type' ] == 'ConfigurationAbsence'


def test_130_run_writes_reports( tmp_path, capsys ):
    ''' Run command writes both report files. '''
    module = __.cache_import_module( MODULE_QNAME )
    reports = __.cache_import_module( f"{__.PACKAGE_NAME}.reports" )
    config = _write_homogeneous_config( tmp_path )
    out = tmp_path / 'out'
    code = _invoke( module.RunCommand( config = config, out = str( out ) ) )
    assert code == 0
    assert ( out / reports.CSV_NAME ).is_file( )
    assert ( out / reports.JSON_NAME ).is_file( )
    result = _read_json( capsys )
    assert [ epoch[ 'epoch' ] for epoch in result[ 'epochs' ] ] == [ 0, 1, 2 ]
    assert len( result[ 'files' ] ) == 2


def test_140_gns_check( tmp_path, capsys ):
    ''' Estimator check reports moments for each node. '''
    module = __.cache_import_module( MODULE_QNAME )
    config = _write_homogeneous_config( tmp_path )
    code = _invoke( module.GnsCheckCommand(
        config = config, trials = 2000, batches = ( 25, 75 ) ) )
    assert code == 0
    result = _read_json( capsys )
    assert result[ 'trials' ] == 2000
    assert result[ 'local_batches' ] == [ 25, 75 ]
    assert len( result[ 'g_means' ] ) == 2
    assert not result[ 'wide_intervals' ]


def test_141_gns_check_needs_trials( tmp_path, capsys ):
    ''' Non-positive trial counts are rejected. '''
    module = __.cache_import_module( MODULE_QNAME )
    config = _write_homogeneous_config( tmp_path )
    code = _invoke( module.GnsCheckCommand( config = config, trials = 0 ) )
    assert code == 1
    result = _read_json( capsys )
    assert result[ 'type' ] == 'DomainInvalidity'


def test_150_compare( tmp_path, capsys ):
    ''' Comparison covers every candidate total. '''
    module = __.cache_import_module( MODULE_QNAME )
    config = _write_homogeneous_config( tmp_path )
    code = _invoke( module.CompareCommand( config = config ) )
    assert code == 0
    result = _read_json( capsys )
    totals = [ entry[ 'total' ] for entry in result[ 'comparisons' ] ]
    assert totals == [ 64, 128, 256 ]


# =============================================================================
# Rendering Tests (200-299)
# =============================================================================

def test_200_solve_result_lists_clamped_nodes( ):
    ''' Text rendition names nodes held at their caps. '''
    module = __.cache_import_module( MODULE_QNAME )
    optimizer = __.cache_import_module( f"{__.PACKAGE_NAME}.optimizer" )
    spec = __.produce_cluster(
        ( __.NODE_FAST, __.NODE_SLOW ), caps = ( 50, float( 'inf' ) ) )
    result = module.SolveResult(
        solution = optimizer.find_optperf( spec, 100 ) )
    lines = result.render_as_text( )
    assert lines[ -1 ] == 'Clamped nodes: 0'
    assert result.render_as_json( )[ 'clamped_nodes' ] == [ 0 ]


def test_210_single_trial_warns( two_node_cluster ):
    ''' A lone trial flags unbounded intervals. '''
    module = __.cache_import_module( MODULE_QNAME )
    gns = __.cache_import_module( f"{__.PACKAGE_NAME}.gns" )
    simulator = __.cache_import_module( f"{__.PACKAGE_NAME}.simulator" )
    world = simulator.TruthWorld( true_spec = two_node_cluster )
    local, global_ = simulator.Simulator( world ).sample_gradient_trials(
        ( 25, 75 ), 1 )
    survey = gns.survey_estimators(
        local, global_, ( 25, 75 ), 1.0, 100.0, 256 )
    result = module.GnsCheckResult( survey = survey )
    assert result.render_as_json( )[ 'wide_intervals' ]
    assert result.render_as_text( )[ -1 ].startswith( 'Warning' )


def test_220_json_flag_selects_json( ):
    ''' JSON shorthand overrides format option. '''
    module = __.cache_import_module( MODULE_QNAME )
    display = module.DisplayOptions( json = True )
    assert display.produce_format( ) is module.DisplayFormats.Json
    display = module.DisplayOptions( )
    assert display.produce_format( ) is module.DisplayFormats.Text


# =============================================================================
# Entry Point Tests (300-399)
# =============================================================================

def test_300_missing_argument_exits_one( ):
    ''' Usage errors exit with one. '''
    completed = _execute( 'solve' )
    assert completed.returncode == 1


def test_301_unknown_option_exits_one( tmp_path ):
    ''' Unrecognized options exit with one. '''
    config = _write_homogeneous_config( tmp_path )
    completed = _execute(
        'solve', '--config', config, '--batch', '128', '--bogus' )
    assert completed.returncode == 1


def test_310_json_flag_after_subcommand( tmp_path ):
    ''' JSON shorthand follows subcommand arguments. '''
    config = _write_homogeneous_config( tmp_path )
    completed = _execute(
        'solve', '--config', config, '--batch', '128', '--json' )
    assert completed.returncode == 0
    result = _parse_json( completed.stdout + completed.stderr )
    assert result[ 'alloc_int' ] == [ 32, 32, 32, 32 ]


def test_311_infeasible_batch_exits_two( tmp_path ):
    ''' Infeasible batch stays distinguishable from usage errors. '''
    config = _write_homogeneous_config( tmp_path )
    completed = _execute(
        'solve', '--config', config, '--batch', '1', '--json' )
    assert completed.returncode == 2
    result = _parse_json( completed.stdout + completed.stderr )
    assert result[ 'type' ] == 'AllocationInfeasibility'


def test_312_solve_prints_nine_digit_reals( tmp_path ):
    ''' Printed JSON carries reals at nine significant digits. '''
    config = _write_two_node_config( tmp_path, t_o = 0.1 )
    completed = _execute(
        'solve', '--config', config, '--batch', '100', '--json' )
    assert completed.returncode == 0
    assert '61.1111111,' in completed.stdout
    assert '61.11111111' not in completed.stdout
    result = _parse_json( completed.stdout )
    assert result[ 'alloc_int' ] == [ 61, 39 ]
    assert result[ 'scenario' ] == 'all-compute'


def test_313_verbose_logs_solver_decisions( tmp_path ):
    ''' Verbose runs log debug records to stderr only. '''
    config = _write_two_node_config( tmp_path, t_o = 0.1 )
    verbose = _execute(
        'solve', '--config', config, '--batch', '100', '--json',
        '--verbose' )
    assert verbose.returncode == 0
    assert 'optperf.optimizer: Batch 100: all nodes computing' in (
        verbose.stderr )
    assert _parse_json( verbose.stdout )[ 'alloc_int' ] == [ 61, 39 ]
    quiet = _execute(
        'solve', '--config', config, '--batch', '100', '--json' )
    assert quiet.returncode == 0
    assert 'optperf.optimizer' not in quiet.stderr
