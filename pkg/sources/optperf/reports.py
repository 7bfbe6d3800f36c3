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



''' Epoch report files for plotting and comparison.

    Real numbers carry nine significant digits, so seeded runs reproduce
    byte for byte.
'''


from . import __
from . import models as _models
from . import training as _training


CSV_NAME = 'epochs.csv'
JSON_NAME = 'epochs.json'


def produce_csv_header( size: int ) -> tuple[ str, ... ]:
    ''' Column names of epoch table for cluster size. '''
    return (
        'epoch', 'chosen_B',
        *( f'b_{i}' for i in range( size ) ),
        'predicted_T', 'realized_T_mean', 'b_noise',
        'efficiency', 'goodput', 'scenario', 'prediction_error' )


def render_epochs_csv(
    reports: __.cabc.Sequence[ _training.EpochReport ]
) -> str:
    ''' Renders epoch reports as CSV table. '''
    size = len( reports[ 0 ].allocation ) if reports else 0
    stream = __.io.StringIO( )
    writer = __.csv.writer( stream, lineterminator = '\n' )
    real = _models.format_real
    writer.writerow( produce_csv_header( size ) )
    for report in reports:
        scenario = report.scenario
        writer.writerow( (
            report.epoch, report.total, *report.allocation,
            real( report.predicted_time ),
            real( report.realized_time ),
            real( report.b_noise ),
            real( report.efficiency ),
            real( report.goodput ),
            '' if __.is_absent( scenario ) else scenario.render_as_text( ),
            real( report.prediction_error ) ) )
    return stream.getvalue( )


def render_epochs_json(
    reports: __.cabc.Sequence[ _training.EpochReport ]
) -> str:
    ''' Renders epoch reports as JSON document. '''
    document = {
        'epochs': [
            _models.round_reals( report.render_as_json( ) )
            for report in reports ] }
    return __.json.dumps( document, indent = 2, sort_keys = True ) + '\n'


def write_reports(
    reports: __.cabc.Sequence[ _training.EpochReport ],
    directory: str | __.pathlib.Path,
) -> tuple[ __.pathlib.Path, __.pathlib.Path ]:
    ''' Writes CSV and JSON epoch reports into directory. '''
    target = __.pathlib.Path( directory )
    target.mkdir( parents = True, exist_ok = True )
    csv_path = target / CSV_NAME
    json_path = target / JSON_NAME
    csv_path.write_text( render_epochs_csv( reports ), encoding = 'utf-8' )
    json_path.write_text( render_epochs_json( reports ), encoding = 'utf-8' )
    return csv_path, json_path
