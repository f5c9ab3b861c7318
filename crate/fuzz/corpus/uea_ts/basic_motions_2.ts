@problemName BasicMotions
@timeStamps false
@missing false
@univariate false
@dimensions 6
@equalLength true
@seriesLength 100
@classLabel true Standing Running Walking Badminton
@data
0.079106,0.079106,-0.903497,1.116125,1.6382,1.003448,0.028774,0.03005,-0.120485,-0.120485,0.667496,-0.312815,-0.032064,0.462654,0.462654,0.50726,0.381774,-0.173109,0.075566,0.182602,0.241339,0.128828,-0.005551,-0.234381,-0.060061,0.134305,-0.119217,-0.118415,-0.034857,-0.152736,-0.30275,-0.258284,-0.153046,-0.183976,-0.160971,-0.241554,-0.12605,-0.047558,-0.180656,-0.223321,-0.269544,-0.132218,-0.247598,-0.167151,-0.226787,-0.226787,-0.221194,-0.124525,-0.215384,-0.292342,-0.2096,-0.350283,-0.212305,-0.101916,-0.125474,-0.171308,-0.392737,-0.333702,-0.049047,-0.161384,-0.332913,-0.323573,-0.260746,-0.386039,0.073956,0.013228,-0.134901,-0.114447,-0.151736,-0.265312,-0.265312,-0.192506,0.006082,0.006082,-0.056635,-0.209398,-0.160216,-0.135851,-0.27988,-0.181434,-0.129874,-0.041725,-0.176548,-0.257786,-0.257786,-0.239707,-0.216372,-0.08794,-0.227259,-0.143374,-0.308963,-0.269968,-0.191018,-0.24424,-0.2092,-0.167918,-0.22767,-0.193271,-0.193271,-0.20515:0.394032,0.394032,-3.666397,-0.656101,1.405135,2.220504,3.248704,3.020615,1.957117,1.957117,-1.956176,-3.138694,-2.905234,-1.249818,-1.249818,0.902984,2.535184,2.947793,2.53536,1.058201,0.097825,-1.498574,-1.912198,-1.189464,0.048358,1.049725,1.632314,1.497473,0.772937,0.208221,-0.124439,-0.324037,-0.440494,-0.09376,0.272178,0.410578,0.63099,0.304098,0.452631,0.055369,-0.195426,-0.108085,0.05122,0.495086,0.582479,0.582479,0.535399,0.254673,0.045147,0.126648,-0.011763,-0.067802,0.062543,0.041191,0.292536,0.566593,0.40288,-0.095309,-0.671382,-0.299112,0.264913,0.979325,0.585794,-0.286732,-0.684911,-0.702381,0.063297,0.685951,1.384099,1.393837,1.393837,-0.526192,-1.453164,-1.453164,-1.491239,-0.588188,0.54238,0.976972,1.021334,0.546116,-0.004861,-0.485268,-0.269133,-0.162642,-0.162642,0.426015,0.545045,0.305803,0.072097,-0.071186,-0.124647,-0.065241,-0.032477,0.152639,0.3387,0.224085,0.118392,0.055227,0.055227,-0.00339:0.551444,0.551444,-0.282844,0.333118,0.393875,0.030765,-0.313529,-1.581368,-1.046431,-1.046431,0.527999,1.025005,0.69038,0.010441,0.010441,-0.318485,-0.339922,-0.602718,-0.537257,0.032005,0.385068,0.808822,0.945214,0.31803,-0.163724,-0.367703,-0.504733,-0.293617,0.008929,0.438756,0.435576,0.374493,0.057105,-0.070314,-0.206731,-0.062707,0.034384,-0.019835,0.147044,0.154054,0.223995,0.034453,-0.140365,-0.104581,-0.110829,-0.110829,0.111417,0.092016,0.075045,0.098005,0.179158,0.119141,-0.100571,-0.217936,-0.164587,0.012233,0.244841,0.348375,0.154106,-0.035424,-0.254828,-0.235535,-0.0036,0.154836,0.425322,0.069628,0.00436,-0.241098,-0.409935,-0.37759,-0.37759,0.259687,0.733738,0.733738,0.261785,-0.187312,-0.454873,-0.386007,-0.116938,0.025466,0.207466,0.14792,0.041364,-0.136943,-0.136943,-0.126909,-0.019764,0.04661,0.118345,0.043983,-0.132656,-0.07248,-0.039316,0.049186,0.082105,0.039889,-0.088594,-0.04153,-0.04153,-0.015113:0.351565,0.351565,-0.095881,1.624657,1.187864,1.004091,0.340912,-0.311615,-0.348902,-0.348902,-0.226387,-0.101208,-0.00799,0.039951,0.039951,0.351565,0.378199,0.079901,0.02397,-0.194426,-0.189099,-0.162466,-0.087891,-0.25302,-0.135832,-0.018644,0.063921,0.26101,0.159802,-0.021307,-0.21307,-0.082565,-0.047941,-0.021307,-0.029297,0.026634,0.189099,0.119852,0.095881,0.077238,0.109198,0.053267,-0.002663,0.101208,0.021307,0.021307,0.063921,0.063921,0.359555,0.386189,0.19709,-0.540665,-0.239704,-0.306288,-0.085228,-0.093218,0.00799,0.063921,-0.034624,-0.146486,-0.141159,-0.117188,-0.125179,0.183773,0.311615,0.079901,0.154476,0.0,-0.396843,-0.439456,-0.439456,-0.034624,0.308951,0.308951,-0.22106,-0.149149,-0.165129,0.178446,0.189099,0.191763,0.194426,-0.039951,-0.026634,0.045277,0.045277,0.013317,0.005327,0.061258,-0.042614,-0.077238,-0.018644,0.013317,0.010653,0.037287,0.0,0.039951,-0.029297,0.0,0.0,-0.00799:0.02397,0.02397,-0.319605,-0.569962,-0.271664,-0.047941,0.162466,-0.013317,-0.143822,-0.143822,-0.311615,-0.055931,0.191763,0.21307,0.21307,0.19709,0.117188,0.00799,-0.162466,-0.242367,-0.25302,-0.178446,0.002663,0.247694,0.284981,0.151812,0.042614,-0.151812,-0.202416,-0.125179,-0.066584,0.079901,0.127842,0.069248,0.037287,-0.047941,-0.050604,-0.034624,-0.03196,-0.010653,0.00799,0.069248,0.029297,0.0,-0.034624,-0.034624,-0.063921,-0.01598,-0.005327,-0.010653,-0.010653,-0.026634,0.047941,-0.010653,-0.050604,-0.085228,-0.103872,0.0,0.063921,0.066584,0.077238,-0.005327,-0.047941,-0.090555,-0.00799,0.029297,0.103872,0.114525,0.117188,0.002663,0.002663,-0.133169,-0.087891,-0.087891,0.170456,0.178446,0.095881,-0.042614,-0.071911,-0.079901,-0.050604,0.0,0.047941,0.034624,0.034624,-0.021307,-0.03196,-0.00799,-0.002663,0.047941,0.034624,-0.002663,-0.026634,-0.039951,-0.013317,-0.010653,0.005327,-0.013317,-0.013317,-0.010653:0.633883,0.633883,0.972131,1.209171,1.739182,1.499479,0.428803,-0.282318,-0.926854,-0.926854,-1.267765,-0.66318,0.143822,1.025398,1.025398,1.395607,1.201181,0.354229,-0.218397,-0.865596,-1.049369,-0.852279,-0.364882,0.380862,0.692477,0.689814,0.447447,0.045277,-0.292971,-0.274327,-0.199753,-0.210406,0.005327,0.178446,0.223723,0.122515,0.029297,-0.055931,-0.079901,-0.165129,-0.175783,0.029297,0.165129,0.157139,0.117188,0.117188,-0.050604,-0.125179,-0.194426,-0.189099,-0.114525,0.109198,0.130505,0.125179,0.087891,-0.005327,-0.223723,-0.367545,-0.178446,0.170456,0.338248,0.223723,-0.191763,-0.423476,-0.330258,0.186436,0.303624,0.346238,0.375536,-0.002663,-0.002663,-0.740418,-0.657853,-0.657853,0.117188,0.487397,0.540665,0.242367,-0.058594,-0.247694,-0.298298,-0.191763,0.058594,0.159802,0.159802,0.143822,0.03196,-0.114525,-0.130505,-0.109198,-0.039951,-0.002663,0.047941,0.071911,0.063921,-0.021307,-0.042614,-0.063921,-0.063921,-0.03196:Standing
0.377751,0.377751,2.952965,4.310925,3.256906,0.850679,-0.909276,-0.909276,0.205036,-0.480176,-0.335057,-0.126666,-0.25153,-0.26917,-0.26917,-0.300983,-0.300983,-0.371338,-0.193407,-0.597333,0.11343,-0.162806,0.008696,-0.374925,-0.30439,-0.026558,-0.35821,-0.515776,-0.046148,-0.144326,-0.284587,-0.317509,0.106786,-0.296796,-0.295219,-0.295219,-0.314541,-0.45851,-0.45851,-0.193004,-0.193004,-0.170549,-0.170549,-0.386525,-0.367479,-0.159422,-0.29598,-0.363492,-0.396972,-0.358613,-0.442344,-0.075491,-0.281528,-0.127631,-0.110878,-0.13422,-0.103901,-0.418226,-0.425436,-0.370799,-0.203984,-0.307469,-0.283588,-0.06342,-0.265932,-0.212629,-0.312527,-0.312527,-0.35707,-0.35707,-0.234194,-0.234194,-0.148623,-0.254128,-0.342918,-0.342918,-0.307717,-0.288853,-0.206991,-0.317809,-0.380047,-0.315195,-0.356792,-0.319121,-0.26593,-0.136431,-0.186955,-0.264595,-0.253146,-0.279518,-0.209648,-0.226917,-0.351601,-0.318476,-0.287704,-0.287704,-0.323383,-0.323383,-0.333625,-0.333625:-0.61085,-0.61085,0.970717,-1.625661,-6.969257,-3.750327,-3.762961,-3.762961,-0.580699,0.782229,1.046099,1.843534,1.473271,0.793225,0.793225,-0.837754,-0.837754,-1.020851,-0.640181,0.32014,-0.398871,0.392694,1.05405,0.87377,0.591851,0.067974,-0.282601,-0.292477,-0.299014,0.053905,0.347178,0.305793,0.522609,0.697637,0.656868,0.656868,-0.079679,-0.353155,-0.353155,-0.290084,-0.290084,0.401593,0.401593,0.770462,0.742822,0.462118,0.185282,-0.136056,-0.415889,-0.49872,-0.27276,0.074072,0.459907,0.871236,0.718749,0.497472,0.245897,-0.111263,-0.359839,-0.537982,-0.330117,0.071059,0.429994,0.820934,0.786964,0.687065,0.222263,0.222263,-0.682261,-0.682261,-0.365944,-0.365944,0.324679,0.662562,0.710279,0.710279,0.263486,-0.004845,-0.461535,-0.444313,-0.351846,-0.147521,0.220674,0.567315,0.676642,0.478225,0.167015,-0.079429,-0.293329,-0.303092,-0.257912,0.095899,0.410316,0.478979,0.344518,0.344518,-0.098593,-0.098593,-0.215987,-0.215987:-0.147376,-0.147376,-5.962515,-1.898794,-2.730436,0.506514,0.030191,0.030191,0.57639,0.389283,0.262248,0.414982,0.300707,0.310287,0.310287,0.233792,0.233792,0.22401,0.132538,0.173558,0.159204,0.2012,0.087576,0.065597,0.25585,0.227074,0.128366,0.34654,0.221333,-0.002348,-0.039309,-0.001896,0.051506,-0.095245,0.159304,0.159304,0.214541,0.165208,0.165208,-0.06777,-0.06777,-0.066491,-0.066491,-0.071366,0.012548,-0.004922,0.013739,0.138816,0.136874,0.077163,-0.033462,-0.112763,-0.016241,0.059546,-0.079959,0.029375,0.034459,0.116902,0.16173,0.066766,-0.069821,-0.042382,-0.079564,-0.081878,-0.146703,-0.107044,-0.007593,-0.007593,0.188157,0.188157,0.040176,0.040176,-0.19009,-0.239582,0.032026,0.032026,0.058212,0.102983,0.152822,0.11508,-0.029222,-0.073237,-0.084682,-0.065975,-0.031103,0.024887,0.006447,0.027814,0.017837,7.51E-4,-0.019029,-0.032673,-0.023984,-0.045427,0.055352,0.055352,0.063051,0.063051,-8.48E-4,-8.48E-4:-0.103872,-0.103872,-7.593275,-5.345389,-2.743274,0.990775,-0.692477,-0.692477,0.0,-0.074574,0.039951,-0.037287,-0.133169,0.018644,0.018644,-0.167792,-0.167792,-0.114525,-0.093218,-0.753734,0.287644,0.364882,0.218397,-0.103872,0.103872,-0.069248,-0.103872,-0.01598,0.026634,0.047941,0.077238,0.19709,0.133169,-0.029297,0.005327,0.005327,-0.026634,0.002663,0.002663,0.00799,0.00799,0.095881,0.095881,0.00799,0.039951,-0.055931,-0.085228,-0.071911,-0.055931,-0.01598,-0.010653,0.085228,0.045277,0.058594,0.02397,0.037287,-0.037287,-0.03196,-0.013317,0.026634,0.063921,0.109198,0.010653,0.063921,-0.01598,-0.093218,-0.101208,-0.101208,-0.010653,-0.010653,0.069248,0.069248,0.047941,0.098545,0.037287,0.037287,-0.047941,-0.029297,-0.021307,-0.034624,0.0,0.063921,0.077238,0.039951,0.034624,0.042614,-0.018644,-0.03196,-0.053267,0.002663,0.013317,0.021307,0.037287,-0.018644,-0.01598,-0.01598,-0.018644,-0.018644,-0.00799,-0.00799:-0.109198,-0.109198,-0.697804,0.402169,0.615239,0.22106,-0.135832,-0.135832,0.079901,-0.095881,-0.165129,0.002663,0.005327,0.074574,0.074574,0.077238,0.077238,0.02397,0.058594,0.042614,-0.093218,-0.125179,-0.018644,-0.133169,-0.037287,-0.026634,0.01598,0.045277,0.029297,0.047941,0.034624,0.058594,-0.005327,-0.026634,-0.03196,-0.03196,-0.026634,0.034624,0.034624,0.018644,0.018644,-0.029297,-0.029297,-0.029297,-0.037287,-0.026634,-0.061258,0.0,0.034624,0.029297,0.034624,0.00799,-0.042614,-0.034624,-0.018644,-0.053267,-0.03196,0.005327,0.037287,0.03196,0.042614,-0.00799,0.010653,-0.02397,-0.018644,0.0,-0.026634,-0.026634,0.053267,0.053267,0.053267,0.053267,0.02397,-0.021307,-0.045277,-0.045277,-0.03196,-0.02397,0.010653,0.047941,0.053267,0.055931,0.0,0.002663,-0.039951,-0.039951,-0.01598,0.00799,0.002663,0.013317,0.005327,0.0,-0.005327,0.0,-0.00799,-0.00799,-0.010653,-0.010653,0.01598,0.01598:-0.037287,-0.037287,-2.865789,-4.176168,-3.417107,-1.265102,-0.173119,-0.173119,0.807002,1.1053,0.844289,0.306288,-0.114525,-0.460763,-0.460763,-0.383526,-0.383526,-0.111862,0.146486,0.396843,0.191763,0.210406,0.154476,0.002663,-0.215733,-0.22106,-0.146486,-0.071911,0.082565,0.207743,0.226387,0.106535,0.133169,0.071911,-0.087891,-0.087891,-0.210406,-0.167792,-0.167792,0.151812,0.151812,0.234377,0.234377,0.119852,-0.02397,-0.157139,-0.189099,-0.231713,-0.170456,-0.03196,0.125179,0.223723,0.276991,0.173119,-0.00799,-0.157139,-0.19709,-0.21307,-0.170456,-0.055931,0.082565,0.242367,0.25302,0.173119,-0.029297,-0.111862,-0.239704,-0.239704,-0.165129,-0.165129,0.202416,0.202416,0.319605,0.271664,-0.106535,-0.106535,-0.22905,-0.258347,-0.210406,0.0,0.103872,0.162466,0.210406,0.186436,0.03196,-0.103872,-0.149149,-0.165129,-0.114525,-0.013317,0.058594,0.143822,0.122515,0.039951,-0.039951,-0.039951,-0.135832,-0.135832,0.034624,0.034624:Standing
