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



''' Command-line interface. '''

# ruff: noqa: F821


import appcore as _appcore

from appcore import cli as _appcore_cli

from . import __
from . import baselines as _baselines
from . import configuration as _configuration
from . import exceptions as _exceptions
from . import gns as _gns
from . import models as _models
from . import optimizer as _optimizer
from . import reports as _reports
from . import simulator as _simulator
from . import training as _training


_distribution_name = 'optperf-sim'


class DisplayFormats( __.enum.Enum ):
    ''' Output formats for reporting. '''

    Text = 'text'
    Json = 'json'


class DisplayOptions( _appcore_cli.DisplayOptions ):
    ''' Display options extending appcore.cli with output format selection.
    '''

    format: __.typx.Annotated[
        DisplayFormats,
        __.tyro.conf.arg( prefix_name = False ),
        __.ddoc.Doc( ''' Output format for reporting. ''' )
    ] = DisplayFormats.Text
    json: __.typx.Annotated[
        bool,
        __.tyro.conf.arg( prefix_name = False ),
        __.ddoc.Doc( ''' Report as JSON, whatever the format option. ''' )
    ] = False

    def produce_format( self ) -> DisplayFormats:
        ''' Effective output format. '''
        if self.json: return DisplayFormats.Json
        return self.format


ConfigArgument: __.typx.TypeAlias = __.typx.Annotated[
    str,
    __.tyro.conf.arg( prefix_name = False ),
    __.ddoc.Doc( ''' Path to JSON or TOML run configuration. ''' )
]


class RenderableResult( __.immut.DataclassProtocol, __.typx.Protocol ):
    ''' Protocol for command results with format-specific rendering. '''

    @__.abc.abstractmethod
    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders result as JSON-compatible dictionary. '''
        raise NotImplementedError

    @__.abc.abstractmethod
    def render_as_text( self ) -> tuple[ str, ... ]:
        ''' Renders result as text lines. '''
        raise NotImplementedError


class SolveResult( RenderableResult ):
    ''' Result from solve command execution. '''

    solution: _optimizer.OptPerfSolution

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders result as JSON-compatible dictionary. '''
        return self.solution.render_as_json( )

    def render_as_text( self ) -> tuple[ str, ... ]:
        ''' Renders result as text lines. '''
        solution = self.solution
        lines = [
            f'Total batch size: {solution.alloc_int.total}',
            'Batch time: '
            f'{_models.format_real( solution.batch_time )} s',
            f'Scenario: {solution.scenario.render_as_text( )}',
            'Node  Real           Integer  Bottleneck',
        ]
        lines.extend(
            f'{i:<4}  {_models.format_real( real ):<13}  '
            f'{int( integer ):<7}  {label.value}'
            for i, ( real, integer, label ) in enumerate( zip(
                solution.alloc_real.local_batches,
                solution.alloc_int.local_batches,
                solution.labels ) ) )
        if solution.clamped_nodes:
            clamped = ', '.join( map( str, sorted( solution.clamped_nodes ) ) )
            lines.append( f'Clamped nodes: {clamped}' )
        return tuple( lines )


class RunResult( RenderableResult ):
    ''' Result from run command execution. '''

    reports: tuple[ _training.EpochReport, ... ]
    files: tuple[ str, ... ]

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders result as JSON-compatible dictionary. '''
        return {
            'epochs': [ report.render_as_json( ) for report in self.reports ],
            'files': list( self.files ),
        }

    def render_as_text( self ) -> tuple[ str, ... ]:
        ''' Renders result as text lines. '''
        real = _models.format_real
        lines = [
            'Epoch  B       Predicted T   Realized T    B_noise       '
            'Goodput' ]
        lines.extend(
            f'{report.epoch:<5}  {report.total:<6}  '
            f'{real( report.predicted_time ) or "-":<12}  '
            f'{real( report.realized_time ):<12}  '
            f'{real( report.b_noise ) or "-":<12}  '
            f'{real( report.goodput )}'
            for report in self.reports )
        lines.extend( f'Wrote {name}' for name in self.files )
        return tuple( lines )


class GnsCheckResult( RenderableResult ):
    ''' Result from noise scale estimator check. '''

    survey: _gns.EstimatorSurvey

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders result as JSON-compatible dictionary. '''
        survey = self.survey
        return {
            'local_batches': list( survey.local_batches ),
            'trials': survey.trials,
            'g_means': list( survey.g_means ),
            's_means': list( survey.s_means ),
            'empirical': _render_moments( survey.empirical ),
            'predicted': _render_moments( survey.predicted ),
            'exact': _render_moments( survey.exact ),
            'g_variance_ratio': survey.g_variance_ratio,
            's_variance_ratio': survey.s_variance_ratio,
            'wide_intervals': survey.trials < 2,
        }

    def render_as_text( self ) -> tuple[ str, ... ]:
        ''' Renders result as text lines. '''
        survey = self.survey
        real = _models.format_real
        lines = [
            f'Local batches: {list( survey.local_batches )}; '
            f'trials: {survey.trials}',
            'Node  Var G (emp)   Var G (pred)  Var G (exact) '
            'Var S (emp)   Var S (pred)  Var S (exact)',
        ]
        for i in range( len( survey.local_batches ) ):
            row = (
                survey.empirical.g_variances[ i ],
                survey.predicted.g_variances[ i ],
                survey.exact.g_variances[ i ],
                survey.empirical.s_variances[ i ],
                survey.predicted.s_variances[ i ],
                survey.exact.s_variances[ i ] )
            lines.append(
                f'{i:<4}  ' + '  '.join( f'{real( v ):<12}' for v in row ) )
        lines.append(
            'Weighted over uniform variance: '
            f'G {real( survey.g_variance_ratio )}, '
            f'S {real( survey.s_variance_ratio )}' )
        if survey.trials < 2:
            lines.append(
                'Warning: a single trial gives no variance information; '
                'intervals are unbounded.' )
        return tuple( lines )


class CompareResult( RenderableResult ):
    ''' Result from strategy comparison. '''

    comparisons: tuple[ _baselines.StrategyComparison, ... ]

    def render_as_json( self ) -> dict[ str, __.typx.Any ]:
        ''' Renders result as JSON-compatible dictionary. '''
        return {
            'comparisons': [
                comparison.render_as_json( )
                for comparison in self.comparisons ] }

    def render_as_text( self ) -> tuple[ str, ... ]:
        ''' Renders result as text lines. '''
        real = _models.format_real
        lines = [
            'B       Even          Tuned         Proportional  OptPerf' ]
        lines.extend(
            f'{c.total:<6}  {real( c.even_time ):<12}  '
            f'{real( c.tuned_time ):<12}  '
            f'{real( c.proportional_time ):<12}  '
            f'{real( c.optperf_time )}'
            for c in self.comparisons )
        return tuple( lines )


class SolveCommand( __.immut.DataclassObject ):
    ''' Finds the optimal allocation for one total batch size. '''

    config: ConfigArgument
    batch: __.typx.Annotated[
        int,
        __.tyro.conf.arg( prefix_name = False ),
        __.ddoc.Doc( ''' Total batch size to allocate. ''' )
    ]

    async def __call__( self, display: DisplayOptions ) -> int:
        ''' Executes the solve command. '''
        configuration = _configuration.load_configuration( self.config )
        solution = _optimizer.find_optperf( configuration.cluster, self.batch )
        result = SolveResult( solution = solution )
        async with __.ctxl.AsyncExitStack( ) as exits:
            await _render_and_print_result( result, display, exits )
        return 0


class RunCommand( __.immut.DataclassObject ):
    ''' Runs adaptive training against the simulated cluster. '''

    config: ConfigArgument
    out: __.typx.Annotated[
        str,
        __.tyro.conf.arg( prefix_name = False ),
        __.ddoc.Doc( ''' Directory for epoch report files. ''' )
    ] = '.'

    async def __call__( self, display: DisplayOptions ) -> int:
        ''' Executes the run command. '''
        configuration = _configuration.load_configuration( self.config )
        reports = _training.run_training(
            configuration.world, configuration.adaptive )
        paths = _reports.write_reports( reports, self.out )
        result = RunResult(
            reports = reports, files = tuple( map( str, paths ) ) )
        async with __.ctxl.AsyncExitStack( ) as exits:
            await _render_and_print_result( result, display, exits )
        return 0


class GnsCheckCommand( __.immut.DataclassObject ):
    ''' Checks noise scale estimators against their moments. '''

    config: ConfigArgument
    trials: __.typx.Annotated[
        int,
        __.tyro.conf.arg( prefix_name = False ),
        __.ddoc.Doc( ''' Number of Monte-Carlo trials. ''' )
    ] = 100_000
    batches: __.typx.Annotated[
        tuple[ int, ... ],
        __.tyro.conf.arg( prefix_name = False ),
        __.ddoc.Doc( ''' Local batch size of each simulated node. ''' )
    ] = ( 25, 75 )

    async def __call__( self, display: DisplayOptions ) -> int:
        ''' Executes the noise scale check command. '''
        if self.trials < 1:
            raise _exceptions.DomainInvalidity(
                'trials', f'must be positive, got {self.trials}' )
        configuration = _configuration.load_configuration( self.config )
        world = configuration.world
        simulator = _simulator.Simulator( world )
        local, global_ = simulator.sample_gradient_trials(
            self.batches, self.trials )
        truth = world.gradients
        survey = _gns.survey_estimators(
            local, global_, self.batches,
            truth.true_g_sq, truth.tr_sigma, truth.dimension )
        result = GnsCheckResult( survey = survey )
        async with __.ctxl.AsyncExitStack( ) as exits:
            await _render_and_print_result( result, display, exits )
        return 0


class CompareCommand( __.immut.DataclassObject ):
    ''' Compares reference allocation strategies with the optimum. '''

    config: ConfigArgument

    async def __call__( self, display: DisplayOptions ) -> int:
        ''' Executes the compare command. '''
        configuration = _configuration.load_configuration( self.config )
        adaptive = configuration.adaptive
        candidates = _training.enumerate_candidates(
            adaptive.b_min, adaptive.b_max, adaptive.candidates )
        comparisons = _baselines.compare_strategies(
            configuration.cluster, candidates )
        result = CompareResult( comparisons = comparisons )
        async with __.ctxl.AsyncExitStack( ) as exits:
            await _render_and_print_result( result, display, exits )
        return 0


class Cli( __.immut.DataclassObject ):
    ''' Batch allocation simulator command-line interface. '''

    command: __.typx.Union[
        __.typx.Annotated[
            SolveCommand,
            __.tyro.conf.subcommand( 'solve', prefix_name = False ),
        ],
        __.typx.Annotated[
            RunCommand,
            __.tyro.conf.subcommand( 'run', prefix_name = False ),
        ],
        __.typx.Annotated[
            GnsCheckCommand,
            __.tyro.conf.subcommand( 'gns-check', prefix_name = False ),
        ],
        __.typx.Annotated[
            CompareCommand,
            __.tyro.conf.subcommand( 'compare', prefix_name = False ),
        ],
    ]
    display: __.typx.Annotated[
        DisplayOptions,
        __.tyro.conf.arg( prefix_name = False ),
    ] = __.dcls.field( default_factory = DisplayOptions )
    verbose: __.typx.Annotated[
        bool,
        __.ddoc.Doc( ''' Log solver and learner decisions to stderr. ''' )
    ] = False

    async def __call__( self ) -> None:
        ''' Invokes selected subcommand after system preparation. '''
        async with __.ctxl.AsyncExitStack( ) as exits:
            await prepare_logging( exits, self.verbose )
        async with intercept_errors( self.display ):
            exit_code = await self.command( self.display )
            raise SystemExit( exit_code )


def execute( ) -> None:
    ''' Entrypoint for CLI execution. '''
    from asyncio import run
    config = (
        __.tyro.conf.EnumChoicesFromValues,
        __.tyro.conf.HelptextFromCommentsOff,
        __.tyro.conf.ConsolidateSubcommandArgs,
    )
    try: cli = __.tyro.cli( Cli, config = config )
    except SystemExit as exception:
        # Usage error.
        if exception.code == 2: raise SystemExit( 1 ) from None
        raise
    try: run( cli( ) ) # pyright: ignore
    except SystemExit: raise
    except BaseException:
        raise SystemExit( 1 ) from None


async def prepare_logging(
    exits: __.ctxl.AsyncExitStack, verbose: bool
) -> None:
    ''' Routes log records to stderr; debug level when verbose. '''
    distribution = _appcore.DistributionInformation(
        name = _distribution_name,
        location = __.pathlib.Path( __file__ ).parent,
        editable = False )
    inscription = _appcore.InscriptionControl(
        level = 'debug' if verbose else 'warn', target = __.sys.stderr )
    await _appcore.prepare(
        exits,
        application = _appcore.ApplicationInformation(
            name = _distribution_name ),
        distribution = distribution,
        inscription = inscription )


def produce_exit_code( exception: _exceptions.Omnierror ) -> int:
    ''' Exit code for error: 2 if problem is infeasible, else 1. '''
    if isinstance( exception, _exceptions.AllocationInfeasibility ): return 2
    return 1


@__.ctxl.asynccontextmanager
async def intercept_errors(
    display: DisplayOptions,
) -> __.cabc.AsyncIterator[ None ]:
    ''' Context manager that intercepts and renders exceptions.

        Catches Omnierror exceptions and renders them according to the
        display format. Handles unexpected exceptions by formatting them
        as errors.
    '''
    try:
        yield
    except _exceptions.Omnierror as exc:
        async with __.ctxl.AsyncExitStack( ) as exits:
            stream = await display.provide_stream( exits )
            match display.produce_format( ):
                case DisplayFormats.Json:
                    stream.write(
                        __.json.dumps( exc.render_as_json( ), indent = 2 ) )
                    stream.write( '\n' )
                case DisplayFormats.Text:
                    for line in exc.render_as_text( ):
                        stream.write( line )
                        stream.write( '\n' )
        raise SystemExit( produce_exit_code( exc ) ) from exc
    except ( SystemExit, KeyboardInterrupt ):
        raise
    except BaseException as exc:
        async with __.ctxl.AsyncExitStack( ) as exits:
            stream = await display.provide_stream( exits )
            match display.produce_format( ):
                case DisplayFormats.Json:
                    error_data = {
                        'type': 'unexpected_error',
                        'message': str( exc ),
                    }
                    stream.write( __.json.dumps( error_data, indent = 2 ) )
                    stream.write( '\n' )
                case DisplayFormats.Text:
                    stream.write( '## Unexpected Error\n' )
                    stream.write( f'**Message**: {exc}\n' )
        raise SystemExit( 1 ) from exc


async def _render_and_print_result(
    result: RenderableResult,
    display: DisplayOptions,
    exits: __.ctxl.AsyncExitStack,
) -> None:
    ''' Renders and prints a result object based on display options. '''
    stream = await display.provide_stream( exits )
    match display.produce_format( ):
        case DisplayFormats.Json:
            stream.write( __.json.dumps(
                _models.round_reals( result.render_as_json( ) ) ) )
            stream.write( '\n' )
        case DisplayFormats.Text:
            for line in result.render_as_text( ):
                stream.write( line )
                stream.write( '\n' )


def _render_moments(
    table: _gns.MomentTable
) -> dict[ str, __.typx.Any ]:
    return {
        'g_covariance': [ list( row ) for row in table.g_covariance ],
        's_covariance': [ list( row ) for row in table.s_covariance ],
        'global_sq_variance': table.global_sq_variance,
        'local_sq_variances': list( table.local_sq_variances ),
        'global_local_covariances': list(
            table.global_local_covariances ),
    }
