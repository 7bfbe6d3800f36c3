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



''' Optimal local batch allocation for heterogeneous data-parallel
    training, with a ground-truth simulator. '''


from . import __
# --- BEGIN: Injected by Copier ---
from . import exceptions
# --- END: Injected by Copier ---

from . import baselines
from . import configuration
from . import gns
from . import learner
from . import models
from . import optimizer
from . import reports
from . import simulator
from . import training


__version__ = '1.0a0'


def main( ):
    ''' Entrypoint. '''
    from .cli import execute
    execute( )


__.immut.finalize_module( __name__, recursive = True )
