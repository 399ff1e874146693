from .harvester import CrossrefHarvester, HarvestReport
from .doi_cache import DoiCache
